# progress_bar.py
import sys
import threading
import time
from typing import TextIO


class ProgressBar:
    """Single-line progress on stderr; ``update`` may be called from worker threads."""

    def __init__(self, total: int, prefix: str = "", length: int = 40, stream: TextIO | None = None):
        self.start = time.time()
        self.total = max(total, 1)
        self.prefix = prefix
        self.length = length
        self.current = 0
        self.stream = stream or sys.stderr
        self._lock = threading.Lock()
        self._done = False

    def update(self, step: int = 1, message: str = "") -> None:
        """Advance the progress bar by `step`."""
        with self._lock:
            if self._done:
                return
            self.current = min(self.current + step, self.total)
            filled = int(self.length * self.current / self.total)
            bar = "#" * filled + "-" * (self.length - filled)
            elapsed = time.time() - self.start
            self.stream.write(
                f"\r{self.prefix} |{bar}| {self.current}/{self.total} "
                f"{message:<24} ({elapsed:5.1f}s)"
            )
            self.stream.flush()
            if self.current >= self.total:
                self._finish()

    def _finish(self) -> None:
        self._done = True
        self.stream.write("\n")
        self.stream.flush()

    def finish(self) -> None:
        with self._lock:
            if not self._done:
                self._finish()
