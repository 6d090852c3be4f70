import warnings

import pytest

CRITERIA = {
    1: "centralized reduction at lambda=0",
    2: "two-agent oracle tightness",
    3: "soundness on explicit instances",
    4: "monotonicity in lambda",
    5: "DIGing time-varying equals constant",
    6: "EXTRA ordering and time-varying blow-up",
    7: "DIGing step-size anchor",
    8: "reconstruction fidelity",
    9: "scaling homogeneity",
    10: "interpolation and spectral unit suite",
}


class AcceptanceReport:
    def __init__(self):
        self.entries: dict[int, list[tuple[str, str]]] = {}

    def record(self, criterion: int, verdict: str, detail: str) -> None:
        """``verdict`` is PASS, FAIL, SOFT (reported, not failing) or NOTE."""
        self.entries.setdefault(criterion, []).append((verdict, detail))

    def lines(self) -> list[str]:
        out = []
        for n, name in CRITERIA.items():
            got = self.entries.get(n)
            if not got:
                out.append(f"criterion {n:2d} NOT RUN  {name}")
                continue
            verdicts = {v for v, _ in got}
            overall = "FAIL" if "FAIL" in verdicts else "PASS"
            soft = " (soft warnings)" if "SOFT" in verdicts else ""
            out.append(f"criterion {n:2d} {overall}     {name}{soft}")
            for v, d in got:
                out.append(f"      {v:4s} {d}")
        return out


_KEY = pytest.StashKey[AcceptanceReport]()


def pytest_configure(config):
    config.stash[_KEY] = AcceptanceReport()
    warnings.filterwarnings("ignore", message=".*near-optimal.*")


@pytest.fixture(scope="session")
def acceptance(request) -> AcceptanceReport:
    return request.config.stash[_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    report = config.stash.get(_KEY, None)
    if report is None or not report.entries:
        return
    terminalreporter.section("acceptance criteria")
    for line in report.lines():
        terminalreporter.write_line(line)
