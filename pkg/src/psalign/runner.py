"""Running several protocol parties as threads of one process."""

from __future__ import annotations

import threading

from .transport import ChannelClosed


def run_parties(fns) -> list:
    """Run one callable per party in its own thread; re-raise the first failure.

    Each callable receives nothing and returns its party's result. A failing
    party's exception is raised after all threads stop; callers close channels
    in their callables on error so peers do not block.
    """
    results = [None] * len(fns)
    errors = [None] * len(fns)

    def wrap(i, fn):
        try:
            results[i] = fn()
        except BaseException as e:  # noqa: BLE001 - surfaced below
            errors[i] = e

    threads = [threading.Thread(target=wrap, args=(i, fn), daemon=True) for i, fn in enumerate(fns)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    # prefer the root cause over a ChannelClosed raised in a peer
    primary = [e for e in errors if e is not None and not isinstance(e, ChannelClosed)]
    if primary:
        raise primary[0]
    for e in errors:
        if e is not None:
            raise e
    return results


def guarded(fn, *channels):
    """Wrap ``fn`` so its channels are closed if it raises."""
    def run():
        try:
            return fn()
        except BaseException:
            for ch in channels:
                ch.close()
            raise
    return run
