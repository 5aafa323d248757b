import pytest

INVERTER = """\
NODE VDD vdd
NODE GND gnd
NODE CLK clock
NODE a input
NODE y output 10
MOS mp PMOS a VDD y
MOS mn NMOS a GND y
"""


@pytest.fixture
def inverter_text():
    return INVERTER


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record the one-line outcome of an acceptance criterion."""

    def record(number: int, ok: bool, text: str) -> bool:
        ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
