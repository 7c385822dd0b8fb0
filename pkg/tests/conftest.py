import importlib

import pytest

from adaptfuse import _pykernels

BACKENDS = [pytest.param(_pykernels, id="python")]
try:
    BACKENDS.append(pytest.param(importlib.import_module("adaptfuse._ckernels"), id="cython"))
except ImportError:
    BACKENDS.append(pytest.param(None, id="cython",
                                 marks=pytest.mark.skip(reason="extension not built")))


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Each kernel implementation in turn."""
    return request.param


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
