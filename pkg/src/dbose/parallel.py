"""Deterministic block-parallel execution for Monte Carlo batches.

Jobs are dispatched over a process pool and reduced strictly in submission
order, so estimates are bit-identical for any worker count.  Worker
functions must be module-level (picklable) and own their randomness through
counter-based streams keyed by path index.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers: int | None) -> int:
    """Explicit value, else DBOSE_WORKERS, else 1."""
    if workers is not None and workers > 0:
        return workers
    env = os.environ.get("DBOSE_WORKERS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def run_jobs(fn, payloads: list, workers: int = 1) -> list:
    """Apply fn to each payload; results in payload order."""
    if workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, payloads))
