import numpy as np


def derive_seed(root: int, index: int) -> int:
    """Seed for task ``index`` under root seed ``root``."""
    return int(np.random.SeedSequence([int(root) & 0xFFFFFFFF, int(index)]).generate_state(1, np.uint64)[0])


def draw_symbols(rng: np.random.Generator, probs, shape, block_rows: int = 4096) -> np.ndarray:
    """I.i.d. symbols with law ``probs`` as a uint8 array (row blocks keep memory low)."""
    probs = np.asarray(probs, dtype=float)
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    dtype = np.uint8 if probs.size <= 255 else np.int64
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    out = np.empty(shape, dtype=dtype)
    flat = out.reshape(shape[0], -1)
    for s in range(0, shape[0], block_rows):
        u = rng.random((min(block_rows, shape[0] - s), flat.shape[1]))
        flat[s:s + block_rows] = np.searchsorted(cum, u, side="right")
    # probabilities of exactly zero never get drawn; guard against u == cum[i] edge cases
    np.minimum(out, probs.size - 1, out=out)
    return out
