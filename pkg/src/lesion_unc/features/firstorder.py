"""First-order intensity statistics over a lesion."""
import numpy as np

NAMES = ("Mean", "Variance", "Energy", "Maximum", "Percentile90")


def roi_values(img, lesion) -> np.ndarray:
    return np.asarray(img.flat[lesion.index], dtype=np.float64)


def nearest_rank(values, q_num: int, q_den: int = 10) -> float:
    """The ``ceil(n * q_num / q_den)``-th smallest value (1-based)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    k = max(1, -(-v.size * q_num // q_den))
    return float(v[k - 1])


def first_order(img, lesion) -> dict:
    x = roi_values(img, lesion)
    if x.size == 0:
        raise ValueError("empty lesion")
    mean = x.mean()
    return {
        "Mean": float(mean),
        "Variance": float(np.mean((x - mean) ** 2)),
        "Energy": float(np.dot(x, x)),
        "Maximum": float(x.max()),
        "Percentile90": nearest_rank(x, 9),
    }
