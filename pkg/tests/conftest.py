import numpy as np
import pytest

from cascade_lab.network import erdos_renyi, random_regular

# filled by tests/test_acceptance.py, one entry per criterion
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE_RESULTS, key=_criterion_key):
        passed, detail = ACCEPTANCE_RESULTS[criterion]
        line = f"ACCEPTANCE {criterion:<4} {'PASS' if passed else 'FAIL'}"
        terminalreporter.write_line(f"{line}  {detail}" if detail else line)


def _criterion_key(label: str):
    digits = "".join(ch for ch in label if ch.isdigit())
    return int(digits or 0), label


def random_networks(count: int, seed: int, n_max: int = 30, directed_share: float = 0.5):
    """Mixed bag of Erdos-Renyi and regular test networks."""
    rng = np.random.default_rng(seed)
    nets = []
    while len(nets) < count:
        n = int(rng.integers(2, n_max + 1))
        if rng.random() < 0.2 and n >= 4:
            k = int(rng.integers(2, min(5, n - 1) + 1))
            if (n * k) % 2:
                continue
            nets.append(random_regular(n, k, rng))
        else:
            p = float(rng.uniform(0.05, 0.5))
            nets.append(erdos_renyi(n, p, rng, directed=rng.random() < directed_share))
    return nets


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
