import pytest

from fiberrt.ctxcore import backends as _backends
from fiberrt.ctxcore.backends import BACKEND_NAMES, DEAD

ALL_BACKENDS = [b for b in BACKEND_NAMES if _backends.backend_available(b)]


@pytest.fixture(autouse=True)
def _lane_is_clean():
    # a test that leaks a selection would poison every later test on this lane
    assert _backends.active_backend() is None
    yield
    leaked = _backends.active_backend()
    if leaked is not None:
        _backends.backend_release(leaked)
        pytest.fail(f"test left backend {leaked.name} selected")


class Lane:
    """A selected backend plus the contexts a test created on it."""

    def __init__(self, backend):
        self.backend = backend
        self.contexts = []

    @property
    def owner(self):
        return self.backend.owner

    def context(self, entry, arg=None, stack=None, link=None):
        from fiberrt.ctxcore import stack_new
        ctx = self.backend.context_init(stack or stack_new(65536), entry, arg, link)
        self.contexts.append(ctx)
        return ctx

    def close(self):
        for ctx in self.contexts:
            if ctx.state is not DEAD:
                self.backend.discard(ctx)
        _backends.backend_release(self.backend)


@pytest.fixture(params=ALL_BACKENDS)
def lane(request):
    lane = Lane(_backends.backend_select(request.param))
    yield lane
    lane.close()


@pytest.fixture(params=ALL_BACKENDS)
def backend_name(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
