from __future__ import annotations

import numpy as np


def _stratified_test_counts(strata: np.ndarray, n_test: int, test_fraction: float) -> dict[int, int]:
    labels, sizes = np.unique(strata, return_counts=True)
    quota = sizes * test_fraction
    counts = np.floor(quota).astype(int)
    order = np.argsort(-(quota - counts), kind="stable")
    for i in order[: n_test - counts.sum()]:
        counts[i] += 1
    # every stratum with at least two members contributes a test record
    for i in np.flatnonzero((counts == 0) & (sizes >= 2)):
        donor = int(np.argmax(counts))
        if counts[donor] > 1:
            counts[donor] -= 1
            counts[i] += 1
    return dict(zip(labels.tolist(), counts.tolist()))


def split_protocol(
    n_records: int,
    n_repeats: int = 3,
    test_fraction: float = 0.1,
    seed: int = 0,
    strata=None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Independent shuffled train/test partitions of ``range(n_records)``.

    With ``strata`` (one label per record) the test share is allocated per
    stratum by largest remainder, keeping the total test size fixed.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    n_test = int(round(n_records * test_fraction))
    if n_test < 1 or n_test >= n_records:
        raise ValueError(f"{n_records} records cannot give a non-empty {test_fraction:.0%} test split")
    splits = []
    for r in range(n_repeats):
        rng = np.random.default_rng([seed, r])
        if strata is None:
            perm = rng.permutation(n_records)
            test = np.sort(perm[:n_test])
        else:
            strata = np.asarray(strata)
            if len(strata) != n_records:
                raise ValueError("one stratum label per record required")
            per = _stratified_test_counts(strata, n_test, test_fraction)
            picks = []
            for lab in sorted(per):
                members = np.flatnonzero(strata == lab)
                picks.append(rng.permutation(members)[: per[lab]])
            test = np.sort(np.concatenate(picks))
        train = np.setdiff1d(np.arange(n_records), test)
        splits.append((train, test))
    return splits
