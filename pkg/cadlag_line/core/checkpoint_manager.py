import json
import logging
import time
from pathlib import Path
from typing import List, Optional

logger = logging.getLogger(__name__)


class ExperimentCheckpoint:
    """Finished report rows of a convergence run, keyed by the config fingerprint.

    A checkpoint written for one configuration is ignored by any other, so a
    stale file can never leak rows into a different experiment. Write failures
    are logged and swallowed; the checkpoint is an optimisation, not a result.
    """

    def __init__(self, checkpoint_path: str, fingerprint: str):
        self.checkpoint_path = Path(checkpoint_path)
        self.fingerprint = fingerprint

    def save_rows(self, rows: List[dict]):
        state = {
            "fingerprint": self.fingerprint,
            "rows": rows,
            "saved_at": time.time(),
        }
        tmp = self.checkpoint_path.with_suffix(self.checkpoint_path.suffix + ".tmp")
        try:
            self.checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
            with open(tmp, "w") as f:
                json.dump(state, f)
            tmp.replace(self.checkpoint_path)
        except Exception as e:
            logger.warning("CHECKPOINT_WRITE_FAILED: %s (%s)", self.checkpoint_path, e)

    def load_rows(self) -> Optional[List[dict]]:
        if not self.checkpoint_path.exists():
            return None
        try:
            with open(self.checkpoint_path, "r") as f:
                state = json.load(f)
        except Exception as e:
            logger.warning("CHECKPOINT_UNREADABLE: %s (%s)", self.checkpoint_path, e)
            return None
        if state.get("fingerprint") != self.fingerprint:
            logger.info("CHECKPOINT_STALE: fingerprint mismatch, starting fresh")
            return None
        rows = state.get("rows")
        if not isinstance(rows, list):
            return None
        logger.info("CHECKPOINT_RESUMED: %d rows restored", len(rows))
        return rows

    def clear(self):
        try:
            if self.checkpoint_path.exists():
                self.checkpoint_path.unlink()
        except Exception:
            pass
