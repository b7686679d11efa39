import psutil
import logging


class HardwareProbe:
    """Probes the host system to size the sampling worker pool."""

    @staticmethod
    def get_cpu_threads() -> int:
        """Returns the number of logical CPU cores."""
        return psutil.cpu_count(logical=True) or 4

    @staticmethod
    def get_total_ram_gb() -> float:
        """Returns total physical memory in GB."""
        return psutil.virtual_memory().total / (1024**3)

    @staticmethod
    def get_used_ram_gb() -> float:
        return psutil.virtual_memory().used / (1024**3)

    @staticmethod
    def get_process_rss_mb() -> float:
        """Resident set size of the current process in MB."""
        try:
            return psutil.Process().memory_info().rss / (1024 * 1024)
        except Exception as e:
            logging.warning(f"RSS probing failed: {e}")
            return 0.0
