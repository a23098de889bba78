"""
Process-level runtime settings read from the environment (and an optional .env file).
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv


@dataclass
class RuntimeSettings:
    """Knobs that belong to the machine, not to the experiment"""
    workers: int = 1
    log_level: str = "INFO"
    output_dir: Path = Path("runs")

    @classmethod
    def from_env(cls, dotenv_path: Optional[Path] = None) -> "RuntimeSettings":
        load_dotenv(dotenv_path=dotenv_path, override=False)
        return cls(
            workers=max(1, int(os.getenv("PROXBELLMAN_WORKERS", "1"))),
            log_level=os.getenv("PROXBELLMAN_LOG_LEVEL", "INFO").upper(),
            output_dir=Path(os.getenv("PROXBELLMAN_OUTPUT_DIR", "runs")),
        )
