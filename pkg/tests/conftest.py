import numpy as np
import pytest

ACCEPTANCE_LINES = pytest.StashKey[list]()


def numeric_grad(f, x, eps=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        up = float(f())
        x[idx] = orig - eps
        down = float(f())
        x[idx] = orig
        g[idx] = (up - down) / (2 * eps)
    return g


def rel_error(analytic, numeric, floor=1e-6):
    """Elementwise max of |a - n| / max(|a|, |n|, floor)."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_f1(pred, truth):
    """Pair-by-pair classification written independently of the library."""

    def cls(adj, i, j):
        return (bool(adj[j][i]), bool(adj[i][j]))  # (i -> j, j -> i)

    c = len(truth)
    hits_t = hits_p = n_t = n_p = 0
    for i in range(c):
        for j in range(i + 1, c):
            t, p = cls(truth, i, j), cls(pred, i, j)
            n_t += t != (False, False)
            n_p += p != (False, False)
            hits_t += t == p and t != (False, False)
            hits_p += t == p and p != (False, False)
    recall = hits_t / n_t if n_t else 0.0
    precision = hits_p / n_p if n_p else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line per acceptance criterion; shown in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def emit(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL':4}  criterion {criterion}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
