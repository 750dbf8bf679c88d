import numpy as np

# Abnormal Rule 1: points lying more than 3 standard deviations from the
# chunk mean are abnormal.
# Normal Rule 1: when the chunk is flat (zero deviation) every point is
# normal.


def inference(sample: np.ndarray) -> np.ndarray:
    values = sample[:, 0]
    std = values.std()
    if std == 0:
        return np.zeros(len(values), dtype=int)
    z = np.abs(values - values.mean()) / std
    return (z > 3).astype(int)
