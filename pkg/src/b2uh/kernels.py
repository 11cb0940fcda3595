"""Hot numeric kernels.

Each kernel has a loop form compiled by numba (see ``_accel``) and, where a
loop is hopeless in the interpreter, a vectorised numpy twin. The public
dispatchers pick the twin when the JIT is disabled. The two Monte Carlo
samplers are statistically equivalent but not bit-identical: the loop and
the numpy generator keep separate random streams.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# event phase codes, shared with consensus.PHASES
VIEW_CHANGE = 0
PRE_PREPARE = 1
PREPARE = 2
COMMIT = 3


@njit
def pbft_round(faulty, primary, record):
    """One crash-fault PBFT instance over ``n = len(faulty)`` members.

    Returns ``(success, primary, rotations, sent, committed, events)``.
    ``events`` holds ``(phase, sender, receiver)`` rows when ``record`` is
    true and is empty otherwise. Members drawn faulty send nothing.
    """
    n = faulty.shape[0]
    quorum = n - n // 3
    alive = 0
    for i in range(n):
        if not faulty[i]:
            alive += 1

    rotations = 0
    p = primary % n
    while faulty[p] and rotations < n:
        p = (p + 1) % n
        rotations += 1

    cap = 0
    if record:
        cap = rotations * alive * (n - 1) + (n - 1) * (1 + 2 * alive)
    events = np.empty((cap, 3), dtype=np.int64)
    m = 0
    sent = 0
    committed = np.zeros(n, dtype=np.bool_)

    # every timed-out view: live members broadcast VIEW-CHANGE
    for _ in range(min(rotations, n)):
        for i in range(n):
            if faulty[i]:
                continue
            for j in range(n):
                if j != i:
                    if record:
                        events[m, 0] = VIEW_CHANGE
                        events[m, 1] = i
                        events[m, 2] = j
                        m += 1
                    sent += 1
    if rotations >= n:
        return False, p, rotations, sent, committed, events[:m]

    got_pre = np.zeros(n, dtype=np.bool_)
    got_pre[p] = True
    for j in range(n):
        if j != p:
            if record:
                events[m, 0] = PRE_PREPARE
                events[m, 1] = p
                events[m, 2] = j
                m += 1
            sent += 1
            if not faulty[j]:
                got_pre[j] = True

    # endorsements: the primary's pre-prepare plus prepares, own vote included
    endorse = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if not faulty[i]:
            endorse[i] = 1
    for i in range(n):
        if faulty[i] or i == p or not got_pre[i]:
            continue
        endorse[i] += 1
        for j in range(n):
            if j != i:
                if record:
                    events[m, 0] = PREPARE
                    events[m, 1] = i
                    events[m, 2] = j
                    m += 1
                sent += 1
                if not faulty[j]:
                    endorse[j] += 1

    commits = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if faulty[i] or endorse[i] < quorum:
            continue
        commits[i] += 1
        for j in range(n):
            if j != i:
                if record:
                    events[m, 0] = COMMIT
                    events[m, 1] = i
                    events[m, 2] = j
                    m += 1
                sent += 1
                if not faulty[j]:
                    commits[j] += 1

    done = 0
    for i in range(n):
        if not faulty[i] and commits[i] >= quorum:
            committed[i] = True
            done += 1
    return done >= quorum, p, rotations, sent, committed, events[:m]


@njit
def _mc_b2uh_loop(x, y, pf, trials, seed):
    np.random.seed(seed)
    fog_tol = y // 3
    budget = x // 3
    wins = 0
    for _ in range(trials):
        failed = 0
        for _k in range(x):
            if np.random.binomial(y, pf) > fog_tol:
                failed += 1
        if failed > budget:
            continue
        if failed + np.random.binomial(x - failed, pf) <= budget:
            wins += 1
    return wins


def _mc_b2uh_numpy(x, y, pf, trials, seed, chunk=200_000):
    rng = np.random.default_rng(seed)
    fog_tol = y // 3
    budget = x // 3
    wins = 0
    left = trials
    while left > 0:
        k = min(chunk, left)
        failed = (rng.binomial(y, pf, size=(k, x)) > fog_tol).sum(axis=1)
        fv_faults = rng.binomial(x - failed, pf)
        wins += int(np.count_nonzero((failed <= budget) & (failed + fv_faults <= budget)))
        left -= k
    return wins


def mc_b2uh_successes(x: int, y: int, pf: float, trials: int, seed: int, *, loop: bool = False) -> int:
    """Count successful two-layer rounds among ``trials`` sampled rounds.

    Per trial: each fog fails when more than ``y // 3`` of its ``y`` members
    fault; then the head layer succeeds when failed fogs plus independently
    faulty heads of the surviving fogs stay within ``x // 3``.

    The chunked numpy sampler is the default in both modes because batched
    binomial draws outrun the compiled per-trial loop; ``loop=True`` runs
    the loop instead (a second, independently written sampler).
    """
    if loop:
        return int(_mc_b2uh_loop(x, y, pf, trials, seed))
    return _mc_b2uh_numpy(x, y, pf, trials, seed)


def _grid_keys(pos, radius):
    lo = pos.min(axis=0)
    cells = np.floor((pos - lo) / radius).astype(np.int64)
    ncx = int(cells[:, 0].max()) + 1
    ncy = int(cells[:, 1].max()) + 1
    return cells, ncx, ncy


@njit
def _neighbor_counts_loop(pos, cells, ncx, ncy, radius):
    n = pos.shape[0]
    keys = cells[:, 0] * ncy + cells[:, 1]
    order = np.argsort(keys, kind="mergesort")
    skeys = keys[order]
    ncell = ncx * ncy
    start = np.searchsorted(skeys, np.arange(ncell), side="left")
    stop = np.searchsorted(skeys, np.arange(ncell), side="right")
    r2 = radius * radius
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        cx = cells[i, 0]
        cy = cells[i, 1]
        for dx in range(-1, 2):
            gx = cx + dx
            if gx < 0 or gx >= ncx:
                continue
            for dy in range(-1, 2):
                gy = cy + dy
                if gy < 0 or gy >= ncy:
                    continue
                c = gx * ncy + gy
                for t in range(start[c], stop[c]):
                    j = order[t]
                    if j == i:
                        continue
                    ddx = pos[i, 0] - pos[j, 0]
                    ddy = pos[i, 1] - pos[j, 1]
                    if ddx * ddx + ddy * ddy <= r2:
                        counts[i] += 1
    return counts


def _neighbor_counts_numpy(pos, cells, ncx, ncy, radius):
    n = pos.shape[0]
    keys = cells[:, 0] * ncy + cells[:, 1]
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    r2 = radius * radius
    counts = np.zeros(n, dtype=np.int64)
    ids = np.arange(n)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            gx = cells[:, 0] + dx
            gy = cells[:, 1] + dy
            ok = (gx >= 0) & (gx < ncx) & (gy >= 0) & (gy < ncy)
            if not ok.any():
                continue
            src = ids[ok]
            c = gx[ok] * ncy + gy[ok]
            lo = np.searchsorted(skeys, c, side="left")
            hi = np.searchsorted(skeys, c, side="right")
            lens = hi - lo
            total = int(lens.sum())
            if total == 0:
                continue
            ii = np.repeat(src, lens)
            base = np.repeat(lo - (np.cumsum(lens) - lens), lens)
            jj = order[base + np.arange(total)]
            d = pos[ii] - pos[jj]
            hit = (np.einsum("ij,ij->i", d, d) <= r2) & (ii != jj)
            counts += np.bincount(ii[hit], minlength=n)
    return counts


def neighbor_counts(pos, radius: float, *, use_numba: bool | None = None) -> np.ndarray:
    """Number of other points within ``radius`` (inclusive) of each point.

    Uses a uniform grid of cell size ``radius`` so each query only scans the
    3x3 block of cells around the point.
    """
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    if pos.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if radius <= 0:
        raise ValueError("radius must be positive")
    cells, ncx, ncy = _grid_keys(pos, radius)
    jit = USE_NUMBA if use_numba is None else (use_numba and USE_NUMBA)
    if jit:
        return _neighbor_counts_loop(pos, cells, ncx, ncy, float(radius))
    return _neighbor_counts_numpy(pos, cells, ncx, ncy, float(radius))


def neighbor_counts_bruteforce(pos, radius: float) -> np.ndarray:
    """O(n^2) pair scan; the oracle for ``neighbor_counts``."""
    pos = np.asarray(pos, dtype=np.float64)
    d = pos[:, None, :] - pos[None, :, :]
    within = (d**2).sum(axis=-1) <= radius * radius
    np.fill_diagonal(within, False)
    return within.sum(axis=1)


@njit
def defer_accept_kernel(ptr, fogs, betas, eligible, ids, y, nf):
    """Vehicle-proposing deferred acceptance with fixed fog capacity ``y``.

    Candidates are in CSR form: row ``i`` owns ``fogs[ptr[i]:ptr[i+1]]`` and
    ``betas`` likewise, sorted by ascending ``(beta, fog)``; only the first
    ``eligible[i]`` may be proposed to. Vehicles start in ascending-id order
    and an evicted vehicle proposes next. Returns the fog per row, ``-1``
    when unassigned.
    """
    nv = ptr.shape[0] - 1
    cap = max(y, 1)
    slot_row = np.full((nf, cap), -1, dtype=np.int64)
    slot_beta = np.zeros((nf, cap))
    count = np.zeros(nf, dtype=np.int64)
    fog_of = np.full(nv, -1, dtype=np.int64)
    nxt = np.zeros(nv, dtype=np.int64)
    stack = np.empty(nv, dtype=np.int64)
    by_id = np.argsort(ids, kind="mergesort")
    top = 0
    for j in range(nv - 1, -1, -1):
        stack[top] = by_id[j]
        top += 1
    while top > 0:
        top -= 1
        i = stack[top]
        while nxt[i] < eligible[i]:
            e = ptr[i] + nxt[i]
            k = fogs[e]
            b_new = betas[e]
            nxt[i] += 1
            if count[k] < y:
                slot_row[k, count[k]] = i
                slot_beta[k, count[k]] = b_new
                count[k] += 1
                fog_of[i] = k
                break
            if y == 0:
                continue
            w_pos = 0
            for s in range(1, y):
                if slot_beta[k, s] > slot_beta[k, w_pos] or (
                    slot_beta[k, s] == slot_beta[k, w_pos] and ids[slot_row[k, s]] > ids[slot_row[k, w_pos]]
                ):
                    w_pos = s
            w = slot_row[k, w_pos]
            b_w = slot_beta[k, w_pos]
            if b_new < b_w or (b_new == b_w and ids[i] < ids[w]):
                slot_row[k, w_pos] = i
                slot_beta[k, w_pos] = b_new
                fog_of[i] = k
                fog_of[w] = -1
                stack[top] = w
                top += 1
                break
    return fog_of
