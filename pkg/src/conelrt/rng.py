"""Counter-based reproducible Monte-Carlo streams.

Replication ``i`` of a run with master seed ``s`` draws its noise from a
PCG64 generator seeded with ``mix64(s, i)``, the splitmix64 finalizer
applied to the ``i``-th increment of ``s``.  Normal variates come from
numpy's ``Generator.standard_normal``.  Because every replication owns its
stream, results do not depend on scheduling: worker count and block size
only change who computes what, never the numbers.

Reductions follow the same contract: per-replication values are assembled
into arrays in replication order and reduced with numpy's pairwise
summation, and per-block partial sums are combined in block order.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15

DEFAULT_BLOCK = 256


def mix64(seed, i):
    """splitmix64 output for counter ``i`` of stream ``seed`` (64-bit)."""
    z = (int(seed) + (int(i) + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def child_rng(seed, i):
    """Generator owned by replication ``i`` of master stream ``seed``."""
    return np.random.Generator(np.random.PCG64(mix64(seed, i)))


def normal_rows(seed, start, stop, dim):
    """Stack of standard-normal rows for replications [start, stop)."""
    out = np.empty((stop - start, dim), dtype=np.float64)
    for j, i in enumerate(range(start, stop)):
        out[j] = child_rng(seed, i).standard_normal(dim)
    return out


def resolve_workers(workers=None):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("CONELRT_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def mc_collect(dim, reps, seed, block_fn, *, workers=None, block_size=DEFAULT_BLOCK):
    """Run ``block_fn`` over the replication range in fixed blocks.

    ``block_fn(xi, start)`` receives the noise rows for replications
    [start, start+len(xi)) and returns ``(per_rep, partial)``: per-rep
    arrays with one leading row per replication, and partial sums to be
    added across blocks.  Returns the assembled per-rep arrays (length
    ``reps``) and the block-ordered pairwise sums of the partials.

    The output is a deterministic function of (dim, reps, seed,
    block_size) regardless of ``workers``.
    """
    blocks = [(s, min(s + block_size, reps)) for s in range(0, reps, block_size)]
    workers = resolve_workers(workers)

    def run_block(span):
        start, stop = span
        xi = normal_rows(seed, start, stop, dim)
        return block_fn(xi, start)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_block, blocks))
    else:
        results = [run_block(b) for b in blocks]

    per_rep = {}
    first_pr, first_pt = results[0]
    for key, val in first_pr.items():
        shape = (reps,) + np.asarray(val).shape[1:]
        per_rep[key] = np.empty(shape, dtype=np.asarray(val).dtype)
    for (start, stop), (pr, _) in zip(blocks, results):
        for key, val in pr.items():
            per_rep[key][start:stop] = val
    partials = {}
    for key in first_pt:
        stacked = np.stack([pt[key] for _, pt in results], axis=0)
        partials[key] = np.sum(stacked, axis=0)
    return per_rep, partials


def batch_jackknife_se(values, stat_fn, batches=100):
    """Delete-one-batch jackknife SE of ``stat_fn`` over per-rep values.

    Batches are contiguous replication-index ranges, so the estimate is
    deterministic.  ``stat_fn`` maps a 1-d array to a scalar.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    b = min(batches, n)
    edges = np.linspace(0, n, b + 1).astype(int)
    loo = np.empty(b)
    for j in range(b):
        mask = np.ones(n, dtype=bool)
        mask[edges[j]:edges[j + 1]] = False
        loo[j] = stat_fn(values[mask])
    center = loo.mean()
    return float(np.sqrt((b - 1) / b * np.sum((loo - center) ** 2)))
