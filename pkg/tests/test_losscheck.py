"""The self-contained loss verification suite (also behind `conlab losscheck`)."""

import numpy as np

from conlab.losscheck import (
    format_check_table,
    naive_unicon_values,
    run_losscheck,
)


def test_all_checks_pass_and_cover_every_loss():
    results = run_losscheck(trials=80, width=17, seed=1)
    assert all(r.passed for r in results)
    checked = {(r.loss, r.prop) for r in results}
    for kind in ("infonce", "unicon", "unicon_out", "supcon_out", "supcon_in"):
        assert (kind, "grad_fd") in checked
        assert (kind, "shift_inv") in checked
        assert (kind, "stability_600") in checked
    assert ("unicon", "max_bounds") in checked
    assert ("unicon", "triplet_pair") in checked
    assert ("unicon", "naive_overflow") in checked


def test_results_are_deterministic():
    a = run_losscheck(trials=40, width=9, seed=3)
    b = run_losscheck(trials=40, width=9, seed=3)
    assert [(r.loss, r.prop, r.max_err) for r in a] == [
        (r.loss, r.prop, r.max_err) for r in b
    ]


def test_reported_errors_within_tolerance():
    for r in run_losscheck(trials=40, width=9, seed=5):
        assert r.max_err <= r.tol or r.tol == 0.0


def test_naive_unicon_overflows_where_stable_does_not():
    # the direct log(1 + sum_neg * sum_pos) evaluation overflows at +-600
    logits = np.array([[-600.0, 600.0, 0.5]])
    targets = np.array([[True, False, False]])
    with np.errstate(over="ignore"):
        naive = naive_unicon_values(logits, targets)
    assert not np.all(np.isfinite(naive))
    from conlab.losses import loss_batch

    stable, grads = loss_batch("unicon", logits, targets)
    assert np.all(np.isfinite(stable))
    assert np.all(np.isfinite(grads))


def test_naive_unicon_agrees_in_moderate_range():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(20, 8))
    targets = np.zeros((20, 8), dtype=bool)
    targets[:, :2] = True
    from conlab.losses import loss_batch

    naive = naive_unicon_values(logits, targets)
    stable, _ = loss_batch("unicon", logits, targets)
    assert np.allclose(naive, stable, rtol=1e-12)


def test_format_table_mentions_every_row():
    results = run_losscheck(trials=20, width=9, seed=7)
    table = format_check_table(results)
    assert "grad_fd" in table and "naive_overflow" in table
    assert "0 failed" in table
    assert len(table.splitlines()) >= len(results)
