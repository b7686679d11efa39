import logging
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from typing import Callable, List, Optional, Sequence

from tqdm import tqdm

from ..utils.hardware_probe import HardwareProbe
from ..utils.project_config import SessionConfig

logger = logging.getLogger(__name__)


class BatchSampler:
    """Parallel map over sample indices with a bounded in-flight window.

    Indices are cut into chunks of `chunk_size`; at most `max_in_flight`
    chunks are queued on the pool at once and submission backs off while the
    host is above its RAM limit. Results are put back by index, so the output
    never depends on scheduling.
    """

    def __init__(self, config: Optional[SessionConfig] = None):
        self.config = config or SessionConfig()
        self.is_running = True

    def stop(self):
        """Stop submitting new chunks; chunks already running finish."""
        self.is_running = False

    def _chunks(self, count: int) -> List[range]:
        size = max(1, int(self.config.chunk_size))
        return [range(start, min(start + size, count)) for start in range(0, count, size)]

    @staticmethod
    def _run_chunk(fn: Callable[[int], object], indices: range):
        return indices.start, [fn(i) for i in indices]

    def _throttle(self):
        while HardwareProbe.get_used_ram_gb() > self.config.ram_limit_gb:
            logger.warning("MEMORY_CRITICAL: Throttling...")
            time.sleep(2)

    def map(self, fn: Callable[[int], object], count: int, label: str = "sampling") -> list:
        """[fn(0), ..., fn(count - 1)] computed on the worker pool."""
        if count <= 0:
            return []
        chunks = self._chunks(count)
        results: list = [None] * count
        if self.config.cpu_workers <= 1 or len(chunks) == 1:
            for chunk in self._progress(chunks, label):
                start, values = self._run_chunk(fn, chunk)
                results[start:start + len(values)] = values
            return results

        max_in_flight = max(1, int(self.config.max_in_flight))
        futures = set()
        bar = tqdm(total=count, desc=label, disable=not self.config.show_progress, leave=False)
        try:
            with ThreadPoolExecutor(max_workers=self.config.cpu_workers) as executor:
                pending = iter(chunks)
                for chunk in pending:
                    if not self.is_running:
                        break
                    futures.add(executor.submit(self._run_chunk, fn, chunk))
                    if len(futures) >= max_in_flight:
                        done, futures = wait(futures, return_when=FIRST_COMPLETED)
                        self._collect(done, results, bar)
                        self._throttle()
                done, _ = wait(futures)
                self._collect(done, results, bar)
        finally:
            bar.close()
        if not self.is_running:
            logger.warning("BATCH_STOPPED: %s interrupted before completion", label)
        return results

    def _collect(self, done, results: list, bar):
        for fut in done:
            # Worker exceptions surface here, with their original type.
            start, values = fut.result()
            results[start:start + len(values)] = values
            bar.update(len(values))

    def _progress(self, chunks: Sequence[range], label: str):
        if not self.config.show_progress:
            return chunks
        return tqdm(chunks, desc=label, leave=False)
