import os
import json
import logging
from dataclasses import dataclass, asdict, fields
from .hardware_probe import HardwareProbe

logger = logging.getLogger(__name__)


@dataclass
class SessionConfig:
    """Process-wide settings: tolerances, worker pool sizing and output sinks."""
    session_name: str = "default"

    # Numerical tolerances
    exact_tol: float = 1e-9
    monte_carlo_tol: float = 1e-6

    # Resource allocation (tuned by auto_tune)
    cpu_workers: int = 4
    max_in_flight: int = 8
    chunk_size: int = 256
    ram_limit_gb: float = 8.0

    show_progress: bool = False

    # Output sinks; empty string disables the sink
    log_path: str = ""
    ledger_db_path: str = ""

    def auto_tune(self):
        """Interrogate hardware and size the sampling pool."""
        self.cpu_workers = HardwareProbe.get_cpu_threads()
        self.max_in_flight = max(4, self.cpu_workers * 2)
        total_ram = HardwareProbe.get_total_ram_gb()
        self.ram_limit_gb = round(total_ram * 0.75, 1)

    def validate(self) -> bool:
        """Check ranges; returns False instead of raising so callers can fall back to defaults."""
        self.log_path = self.log_path.strip()
        self.ledger_db_path = self.ledger_db_path.strip()
        if not (0.0 < self.exact_tol < 1.0 and 0.0 < self.monte_carlo_tol < 1.0):
            return False
        if self.cpu_workers < 1 or self.max_in_flight < 1 or self.chunk_size < 1:
            return False
        return self.ram_limit_gb > 0

    def save(self, filepath: str):
        """Save config to JSON."""
        with open(filepath, 'w') as f:
            json.dump(asdict(self), f, indent=4)

    @classmethod
    def load(cls, filepath: str):
        """Load config from JSON. Returns a new instance if the file is missing or unreadable."""
        if not filepath or not os.path.exists(filepath):
            return cls()
        try:
            with open(filepath, 'r') as f:
                data = json.load(f)
            known = {f.name for f in fields(cls)}
            unknown = sorted(set(data) - known)
            if unknown:
                logger.warning("CONFIG_IGNORED_KEYS: %s", ", ".join(unknown))
            config = cls(**{k: v for k, v in data.items() if k in known})
        except Exception as e:
            logger.warning("CONFIG_LOAD_FAILED: %s (%s); using defaults", filepath, e)
            return cls()
        if not config.validate():
            logger.warning("CONFIG_INVALID: %s; using defaults", filepath)
            return cls()
        return config
