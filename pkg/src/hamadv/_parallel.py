import os
from concurrent.futures import ProcessPoolExecutor


def default_threads() -> int:
    env = os.environ.get("HAMADV_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def pmap(fn, items, threads: int = 1) -> list:
    """Order-preserving map, fanned out over worker processes when ``threads > 1``.

    ``fn`` and the items must be picklable. Results come back in input order,
    so the merge is deterministic whatever the worker count.
    """
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=chunk))
