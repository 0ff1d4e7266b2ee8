from concurrent.futures import ThreadPoolExecutor

import numpy as np


def map_replicates(fn, count, n_jobs=1):
    """Evaluate ``fn(i)`` for ``i in range(count)``; results are ordered by ``i``.

    ``fn`` must derive its randomness from ``i`` alone, which makes the output
    independent of ``n_jobs``.
    """
    if n_jobs is None or n_jobs <= 1 or count <= 1:
        return np.array([fn(i) for i in range(count)])
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return np.array(list(pool.map(fn, range(count))))
