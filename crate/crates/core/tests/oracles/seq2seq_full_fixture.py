"""Independent replica of the full-mode sequence transformer for T=2, m=0,
two binary digits, f = mean, on the 64 grid sequences with coordinates at
(2a+1)/16. Prints the sup error against f on the truncated inputs.

Each head is evaluated directly as a softmax over control points on the
circle (the attention layers reduce to this exactly up to the e^M slack).
"""
import numpy as np

T, DIGITS = 2, 2
D = T  # T * (m + 1)
L = D * DIGITS


def psi(x):
    # stride-D Cantor code of the first DIGITS binary digits (terminating)
    bits = min(int(np.floor(x * 2 ** DIGITS)), 2 ** DIGITS - 1)
    return sum(2 * ((bits >> (DIGITS - 1 - j)) & 1) * 3.0 ** -(D * j + 1) for j in range(DIGITS))


def sphere_to_cube(b):
    den = 1 - b[:, 1]
    y = np.where(den > 0, b[:, 0] / np.where(den > 0, den, 1), np.sign(b[:, 0]) * np.inf)
    return np.clip((y + 1) / 2, 0, 1)


def cube_to_sphere(u):
    y = 2 * u - 1
    s = y * y
    return np.array([2 * y / (s + 1), (s - 1) / (s + 1)])


def nearest_cantor_digits(r):
    rem = min(max(r, 0.0), 1.0) * 3.0 ** L
    out = []
    for p in range(L):
        block = 3.0 ** (L - 1 - p)
        if rem >= (3 * block - 1) / 2:
            out.append(2)
            rem -= 2 * block
        else:
            out.append(0)
    return out


def decode(digits):
    xs = [0.0] * D
    for pos, dg in enumerate(digits):
        q, j = pos % D, pos // D
        xs[q] += (dg // 2) * 2.0 ** -(j + 1)
    return xs


def head(points, values, lam, z):
    logits = lam * points @ z
    w = np.exp(logits - logits.max())
    return (w @ values) / w.sum()


def run(n, lam):
    ang = (np.arange(n) + 0.5) * 2 * np.pi / n
    pts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    u = sphere_to_cube(pts)
    psi_vals = np.array([psi(v) for v in u])
    g_vals = np.array([np.mean(decode(nearest_cantor_digits(v))) for v in u])
    worst = 0.0
    for a in range(8):
        for b in range(8):
            xs = [(2 * a + 1) / 16, (2 * b + 1) / 16]
            r = sum(3.0 ** -i * head(pts, psi_vals, lam, cube_to_sphere(x)) for i, x in enumerate(xs))
            out = head(pts, g_vals, lam, cube_to_sphere(r))
            trunc = [np.floor(x * 4) / 4 for x in xs]
            worst = max(worst, abs(out - np.mean(trunc)))
    return worst


if __name__ == "__main__":
    for n, lam in [(8192, 2e4), (4096, 2e4)]:
        print(f"N={n} lambda={lam:g} sup_error={run(n, lam):.12e}")
