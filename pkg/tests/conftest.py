import itertools
import math
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def brute_positions(angles):
    """Chain coordinates built one bond at a time with plain floats."""
    x = list(angles)
    n = (len(x) + 5) // 2
    theta, beta = x[:n - 2], x[n - 2:]
    pts = [(0.0, 0.0, 0.0), (0.0, 1.0, 0.0),
           (math.cos(theta[0]), 1.0 + math.sin(theta[0]), 0.0)]
    for i in range(4, n + 1):
        t, b = theta[i - 3], beta[i - 4]
        px, py, pz = pts[-1]
        pts.append((px + math.cos(t) * math.cos(b),
                    py + math.sin(t) * math.cos(b),
                    pz + math.sin(b)))
    return pts


def brute_energy(seq_text, angles):
    """(e_bb, e_lj, e_hc) straight from the defining double sums."""
    n = len(seq_text)
    pts = brute_positions(angles)
    e_bb = sum(0.25 * (1.0 - math.cos(t)) for t in list(angles)[:n - 2])
    coef = {("A", "A"): 1.0, ("B", "B"): 0.5, ("A", "B"): -0.5, ("B", "A"): -0.5}
    e_lj = 0.0
    for i in range(n - 2):
        for j in range(i + 2, n):
            d = math.dist(pts[i], pts[j])
            e_lj += 4.0 * (d ** -12 - coef[seq_text[i], seq_text[j]] * d ** -6)
    hyd = [p for p, s in zip(pts, seq_text) if s == "A"]
    e_hc = 0.0
    if hyd:
        c = tuple(sum(p[k] for p in hyd) / len(hyd) for k in range(3))
        e_hc = sum(math.dist(p, c) for p in hyd)
    return e_bb, e_lj, e_hc


def enumerate_mwu_p(a, b):
    """Exact two-sided p over every relabeling of the pooled sample."""
    pooled = list(a) + list(b)
    n1, n = len(a), len(pooled)
    order = sorted(range(n), key=lambda k: pooled[k])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1

    def u_of(idx):
        return sum(ranks[k] for k in idx) - n1 * (n1 + 1) / 2

    mean = n1 * (n - n1) / 2
    obs = abs(u_of(range(n1)) - mean)
    splits = list(itertools.combinations(range(n), n1))
    hits = sum(1 for s in splits if abs(u_of(s) - mean) >= obs - 1e-9)
    return hits / len(splits)


def load_sequence_table():
    rows = {}
    for line in (FIXTURES / "sequences.txt").read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        label, length, dim, seq = line.split()
        rows[label] = (int(length), int(dim), seq)
    return rows


def conformation_text(label):
    return (FIXTURES / "conformations" / f"{label}.conf").read_text()


@pytest.fixture(scope="session")
def sequence_table():
    return load_sequence_table()


# criterion number -> (title, passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
