import logging
from functools import lru_cache

from pydantic import BaseModel, ConfigDict
from pydantic_settings import BaseSettings, SettingsConfigDict

log = logging.getLogger("densegame.config")


# =====================================================================
# Settings
# =====================================================================
class Settings(BaseSettings):
    """Centralized configuration for densegame runs."""
    model_config = SettingsConfigDict(env_file=".env", env_prefix="DENSEGAME_", extra="ignore")

    MAX_DIM: int = 4096
    LOG_LEVEL: str = "WARNING"
    SEED: int = 0

    FIXED_POINT_TOL: float = 1e-10
    FIXED_POINT_MAX_ITER: int = 100_000
    CERTIFICATE_EPS: float = 1e-8

    CYCLE_WINDOW: int = 64

    ORACLE_RESOLUTION: int = 10
    ORACLE_MAX_POINTS: int = 2_000_000


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    settings = Settings()
    log.debug(f"Loaded settings: MAX_DIM={settings.MAX_DIM}, LOG_LEVEL={settings.LOG_LEVEL}")
    return settings


# =====================================================================
# Numeric policy
# =====================================================================
class NumericPolicy(BaseModel):
    """Tolerances shared by every check in the library.

    Operations accept ``policy=`` to override them for a single call.
    """
    model_config = ConfigDict(frozen=True)

    hermitian_tol: float = 1e-10
    psd_floor: float = -1e-10
    equality_tol: float = 1e-12
    commute_tol: float = 1e-9
    imag_tol: float = 1e-10
    normalization_tol: float = 1e-10
    profile_tol: float = 1e-12
    offdiag_tol: float = 1e-10


DEFAULT_POLICY = NumericPolicy()


def resolve_policy(policy: NumericPolicy | None) -> NumericPolicy:
    return DEFAULT_POLICY if policy is None else policy
