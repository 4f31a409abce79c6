import logging
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from . import __version__
from .core.config import get_settings
from .api.v1.routes_synth import router as synth_router
from .api.v1.routes_train import router as train_router
from .api.v1.routes_enhance import router as enhance_router
from .api.v1.routes_evaluate import router as evaluate_router
from .api.v1.routes_gradcheck import router as gradcheck_router


settings = get_settings()

logging.basicConfig(
    level=settings.log_level.upper(),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)

app = FastAPI(title=settings.app_name, version=__version__)


app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/health")
async def health() -> dict:
    return {"status": "ok"}


@app.get("/")
async def root() -> dict:
    return {
        "app": settings.app_name,
        "version": __version__,
        "api_v1_prefix": settings.api_v1_prefix,
        "threads": settings.threads,
    }


app.include_router(synth_router, prefix=settings.api_v1_prefix)
app.include_router(train_router, prefix=settings.api_v1_prefix)
app.include_router(enhance_router, prefix=settings.api_v1_prefix)
app.include_router(evaluate_router, prefix=settings.api_v1_prefix)
app.include_router(gradcheck_router, prefix=settings.api_v1_prefix)
