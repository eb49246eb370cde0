"""Registry of acceptance outcomes, printed by conftest after the run."""

import contextlib

RESULTS = {}


@contextlib.contextmanager
def criterion(number, title):
    """Record PASS when the block completes, FAIL (and re-raise) otherwise.

    The block may fill ``info["detail"]`` with the measured values.
    """
    info = {"detail": ""}
    try:
        yield info
    except BaseException as exc:
        detail = info["detail"] or f"{type(exc).__name__}: {exc}".splitlines()[0]
        RESULTS[number] = (False, title, detail)
        print(line(number))
        raise
    RESULTS[number] = (True, title, info["detail"])
    print(line(number))


def line(number):
    ok, title, detail = RESULTS[number]
    return f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
