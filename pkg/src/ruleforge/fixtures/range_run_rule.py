import numpy as np

# Abnormal Rule 1: a run of 3 or more consecutive points outside the
# normal operating band [10, 90] is abnormal; shorter excursions are
# treated as noise.


def inference(sample: np.ndarray) -> np.ndarray:
    values = sample[:, 0]
    n = len(values)
    labels = np.zeros(n, dtype=int)
    i = 0
    while i < n:
        if values[i] < 10.0 or values[i] > 90.0:
            j = i
            while j < n and (values[j] < 10.0 or values[j] > 90.0):
                j += 1
            if j - i >= 3:
                labels[i:j] = 1
            i = j
        else:
            i += 1
    return labels
