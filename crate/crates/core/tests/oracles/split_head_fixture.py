"""Brute-force reference for split-head convergence on S^2.

Rebuilds the recursive zonal equal-area partition of S^2 with closed-form
cap areas (2*pi*(1 - cos t)), places p_alpha at cell centers and
p_beta = identity(p_alpha), then measures sup and mean of |x - approx(x)|
over 2048 uniform points. Run with `python3 split_head_fixture.py`.
"""
import numpy as np

TWO_PI = 2 * np.pi


def cap_angle(area):
    return np.arccos(np.clip(1 - area / TWO_PI, -1, 1))


def cap_area(t):
    return TWO_PI * (1 - np.cos(t))


def centers(n):
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    area = 4 * np.pi / n
    cap = cap_angle(area)
    collars = 0 if n == 2 else max(1, int(np.floor((np.pi - 2 * cap) / np.sqrt(area) + 0.5)))
    counts = [1]
    if collars:
        fit = (np.pi - 2 * cap) / collars
        carry, assigned = 0.0, 0
        for i in range(collars):
            t1 = cap + i * fit
            t2 = np.pi - cap if i + 1 == collars else cap + (i + 1) * fit
            ideal = (cap_area(t2) - cap_area(t1)) / area
            k = max(0, int(np.floor(ideal + carry + 0.5)))
            if i + 1 == collars:
                k = n - 2 - assigned
            carry += ideal - k
            assigned += k
            if k > 0:
                counts.append(k)
    counts.append(1)
    bounds = [0.0]
    cum = 0
    for i, k in enumerate(counts):
        cum += k
        bounds.append(np.pi if i + 1 == len(counts) else cap_angle(cum * area))
    pts = []
    for i, k in enumerate(counts):
        t1, t2 = bounds[i], bounds[i + 1]
        if k == 1 and t1 == 0.0:
            pts.append([0, 0, 1.0])
        elif k == 1 and t2 == np.pi:
            pts.append([0, 0, -1.0])
        else:
            tm = 0.5 * (t1 + t2)
            for j in range(k):
                ph = (j + 0.5) * TWO_PI / k if k > 1 else 0.0
                pts.append([np.sin(tm) * np.cos(ph), np.sin(tm) * np.sin(ph), np.cos(tm)])
    return np.array(pts)


def split_head(b, values, lam, x):
    logits = lam * x @ b.T
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    return w @ values


def main():
    rng = np.random.default_rng(20240611)
    x = rng.standard_normal((2048, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    for lam in [8.0, 32.0, 64.0]:
        for n in [64, 256, 1024, 4096]:
            b = centers(n)
            assert len(b) == n
            err = np.linalg.norm(split_head(b, b, lam, x) - x, axis=1)
            print(f"lambda={lam:g} N={n} sup={err.max():.10e} mean={err.mean():.10e}")


if __name__ == "__main__":
    main()
