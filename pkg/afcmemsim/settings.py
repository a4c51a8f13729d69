# settings.py
from functools import lru_cache

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()

# 50 ciclos de quemado alcanzan eta_spectral = 0.95
DEFAULT_P_BURN = 1.0 - 0.05 ** (1.0 / 50)


class Settings(BaseSettings):
    """
    Configuración de la aplicación (variables AFCMEMSIM_* o archivo .env)
    """

    model_config = SettingsConfigDict(env_prefix="AFCMEMSIM_", extra="ignore")

    threads: int = 1
    log_level: str = "INFO"
    out_dir: str = "out"
    p_burn: float = DEFAULT_P_BURN
    sidehole_depth: float = 0.3


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
