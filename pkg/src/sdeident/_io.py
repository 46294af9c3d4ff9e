"""Small shared IO helper."""

from contextlib import contextmanager


@contextmanager
def open_text_sink(target):
    """Yield a writable text file object for a path or pass a file through."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            yield fh
