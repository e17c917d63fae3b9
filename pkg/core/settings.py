"""Environment-driven settings (``UPSLAB_*`` variables, ``.env`` supported) and
the lab defaults read from ``config.yaml``."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class LabSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="UPSLAB_", env_file=".env", extra="ignore")

    output_dir: Path = Path("reports")
    threads: int = 1
    record_timing: bool = False
    log_level: str = "INFO"

    def resolve_output(self, output: Optional[str], default_name: str) -> Path:
        """Explicit output paths win; bare names land in ``output_dir``."""
        if output:
            return Path(output)
        return self.output_dir / default_name


def get_settings() -> LabSettings:
    return LabSettings()


class StudyDefaults(BaseModel):
    levels: List[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    inequality_levels: List[int] = Field(default_factory=lambda: [8, 16, 32])
    order_floor: float = 0.9
    exact_tolerance: float = 1e-11
    t: float = 0.5


class LabDefaults(BaseModel):
    """The ``lab:`` section of config.yaml."""

    tolerances: Dict[str, float] = Field(default_factory=dict)
    ot_sector_limit: int = 500
    max_configs: int = 10**7
    measure_n_max: int = 14
    measure_max_configs: int = 200_000
    mecke_samples: int = 10**6
    kwc_pairs: int = 6
    kwc_max_total: int = 2
    be_margin_factor: float = 0.9
    be_inflation: float = 0.1
    studies: StudyDefaults = Field(default_factory=StudyDefaults)

    @classmethod
    def from_config(cls, config: Optional[Dict[str, Any]]) -> "LabDefaults":
        return cls.model_validate((config or {}).get("lab", {}) or {})
