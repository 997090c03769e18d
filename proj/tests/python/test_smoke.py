import math

import pytest

import cdcd


def tiny_config():
    return cdcd.config([
        "world.classes=2", "world.codebook=3", "world.length=4", "world.concentration=0.3",
        "data.train_per_class=8", "data.heldout_per_class=4", "schedule.steps=3",
        "model.width=8", "model.blocks=1", "train.epochs=2", "train.batch_size=8",
    ])


def test_world_and_mutual_information():
    world = cdcd.make_world(2, 4, 3, 0.5, 5)
    mi = cdcd.true_mutual_information(world)
    assert 0.0 <= mi <= math.log(2) + 1e-12
    data = cdcd.sample_dataset(world, 100, 1)
    assert len(data) == 200
    assert set(data.labels()) == {0, 1}
    est = cdcd.mi_lower_bound(world, data, 5, 3)
    assert est.bound <= mi + 3 * est.standard_error + 1e-9


def test_posterior_rows_are_normalized():
    s = cdcd.build_schedule(3, 3, "uniform", "linear", 0.9)
    row = cdcd.posterior(s, [0, 2], [1, 2], 2)
    assert len(row) == 2 * s.states
    assert sum(row[:3]) == pytest.approx(1.0, abs=1e-12)


def test_infonce_and_truncation():
    assert cdcd.infonce(1.0, [1.0] * 4) == pytest.approx(math.log(5))
    assert cdcd.truncate([0.9, 0.1], 0.86) == [1.0, 0.0]


def test_train_sample_evaluate_roundtrip(tmp_path):
    cfg = tiny_config()
    world = cdcd.world_of(cfg)
    train, heldout = cdcd.datasets_of(cfg, world)
    params, log = cdcd.train(cfg, train, heldout)
    assert [r.epoch for r in log] == [1, 2]
    assert math.isfinite(log[-1].heldout_elbo)
    sched = cdcd.schedule_of(cfg)
    xs = cdcd.sample(params, sched, label=1, count=5, seed=2)
    assert len(xs) == 5 and all(0 <= t < 3 for x in xs for t in x)
    assert cdcd.elbo_nll(params, heldout, sched) > 0.0
    assert cdcd.exact_nll(params, heldout.tokens()[0], heldout.labels()[0], sched) > 0.0
    path = tmp_path / "model.ckpt"
    cdcd.save_checkpoint(path, params, cfg)
    back, cfg_back = cdcd.load_checkpoint(path)
    assert back.tensor("head.bias") == params.tensor("head.bias")
    assert cfg_back.snapshot() == cfg.snapshot()


def test_errors_surface_as_exceptions():
    with pytest.raises(cdcd.CdcdError):
        cdcd.config(["no.such.key=1"])
    with pytest.raises(ValueError):
        cdcd.make_world(1, 4, 4, 1.0, 0)
