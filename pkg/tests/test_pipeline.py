import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import pytest

from amortize.core import Dataset, Sample, save_dataset, split_dataset
from amortize.geometry import chamfer
from amortize.nn import backward, forward, init_params, mlp_spec
from amortize.optim import BfgsConfig
from amortize.pipeline import (
    EvalReport,
    TrainConfig,
    check_dataset,
    direct_optimize,
    encoder_method,
    eval_obstacles,
    evaluate_path_method,
    evaluate_robot_method,
    gen_dataset,
    get_task,
    identity_method,
    task_for,
    time_inference,
    train_decoder,
    train_direct_learning,
    train_encoder,
)
from amortize.sampling import self_intersects
from amortize.sim import FiberConfig, arm_vertices, ballistic_inverse, ballistic_realize, fiber_realize


# -- data -------------------------------------------------------------------

def test_gen_arm_goals_match_realizations():
    ds = gen_dataset("arm", 30, seed=2)
    for s in ds.samples:
        assert np.array_equal(s.goal[:2], s.realization[61])
        assert np.min(np.hypot(*(s.realization - s.goal[2:4]).T)) >= 1.0
    assert sum(ds.split.sizes()) == 30


def test_gen_fiber_designs_valid_and_reproducible():
    ds = gen_dataset("fiber", 4, seed=5, iters_per_path=30)
    assert not any(self_intersects(s.design) for s in ds.samples)
    check_dataset(ds)
    assert task_for(ds).iters_per_path == 30


@pytest.mark.parametrize("task", ["ballistic", "arm"])
def test_gen_byte_identical(tmp_path, task):
    a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
    save_dataset(gen_dataset(task, 25, seed=4), a)
    save_dataset(gen_dataset(task, 25, seed=4, workers=1), b)
    assert a.read_bytes() == b.read_bytes()


def test_gen_rejects_bad_input():
    with pytest.raises(ValueError):
        gen_dataset("boat", 3)
    with pytest.raises(ValueError):
        gen_dataset("arm", 0)


# -- training on a synthetic linear map ---------------------------------------

@dataclass(frozen=True)
class LinearTask:
    A: np.ndarray

    def decoder_spec(self, hidden=None):
        return mlp_spec(self.A.shape[1], (32,) if hidden is None else hidden, self.A.shape[0])

    def decoder_loss(self, dec, batch, rng=None, need_grad=True):
        th = np.stack([s.design for s in batch])
        u = np.stack([s.realization for s in batch])
        pred, cache = forward(dec, th)
        r = pred - u
        loss = float(np.mean(np.sum(r * r, axis=1)))
        return loss, (backward(dec, cache, 2 * r / len(batch))[0] if need_grad else None)


def test_decoder_fits_linear_map():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(2, 3)) * 0.5
    th = rng.uniform(-1, 1, size=(600, 3))
    ds = split_dataset(Dataset("ballistic", tuple(Sample(t, A @ t, A @ t) for t in th), 0), (0.8, 0.2, 0.0), 0)
    cfg = TrainConfig("ballistic", epochs=20, lr=1e-2, batch_size=8, lr_decay=0.9, hidden=())
    res = train_decoder(ds, cfg, task=LinearTask(A))
    assert res.history[-1]["val_loss"] < 1e-4


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig("arm", epochs=0)
    with pytest.raises(ValueError):
        TrainConfig("arm", epochs=1, lr_decay=1.5)
    with pytest.raises(ValueError):
        TrainConfig.default("arm", bogus=1)
    assert TrainConfig.default("fiber", epochs=None).epochs == TrainConfig.default("fiber").epochs


# -- ballistic --------------------------------------------------------------

@pytest.fixture(scope="module")
def ballistic():
    ds = gen_dataset("ballistic", 2000, seed=0)
    cfg = TrainConfig.default("ballistic")
    dec = train_decoder(ds, cfg)
    before = dec.model.fingerprint()
    enc = train_encoder(ds, dec.model, cfg)
    dl = train_direct_learning(ds, cfg)
    return {"ds": ds, "dec": dec, "enc": enc, "dl": dl, "before": before, "task": get_task("ballistic")}


def test_ballistic_encoder_realizes_goals(ballistic):
    task, enc = ballistic["task"], ballistic["enc"].model
    M = task.scale
    test = ballistic["ds"].subset("test")
    err = np.array([abs(ballistic_realize(task.encode(enc, s.goal)[0]) - s.goal[0]) / M for s in test])
    assert np.mean(err < 0.05) >= 0.95


def test_ballistic_decoder_frozen(ballistic):
    assert ballistic["dec"].model.fingerprint() == ballistic["before"]


def test_ballistic_direct_learning_averages_branches(ballistic):
    task, dl = ballistic["task"], ballistic["dl"]
    g = 0.9 * task.scale
    lo, hi = ballistic_inverse(g)
    th = task.encode(dl.model, [g])[0]
    # far from both exact solutions, roughly at their mean
    assert min(abs(th - lo), abs(th - hi)) > 0.1
    assert abs(th - 0.5 * (lo + hi)) < 0.1
    assert dl.history[-1]["train_loss"] < dl.history[0]["train_loss"]


def test_ballistic_direct_optimize_interior(ballistic):
    task, dec = ballistic["task"], ballistic["dec"].model
    M = task.scale
    for frac in np.linspace(0.1, 0.9, 9):
        res = direct_optimize(task, [frac * M], dec)
        assert res.objective <= res.initial_objective
        assert abs(ballistic_realize(res.design[0]) - frac * M) < 1e-3 * M


def test_ballistic_encoder_rejects_wrong_decoder(ballistic):
    wrong = init_params(mlp_spec(2, (4,), 1), 0)
    with pytest.raises(ValueError):
        train_encoder(ballistic["ds"], wrong, TrainConfig.default("ballistic", epochs=1))


# -- arm --------------------------------------------------------------------

def test_arm_outputs_bounded():
    task = get_task("arm")
    enc = init_params(task.encoder_spec(), 3)
    # blow up the last layer so the bound has to do the work
    enc.weights[-1] *= 1e3
    rng = np.random.default_rng(0)
    for _ in range(50):
        th = task.encode(enc, np.r_[rng.normal(size=4) * 20, 0.9])
        assert np.all(th >= 0.8) and np.all(th <= 1.2)


def test_arm_decoder_curve():
    ds = gen_dataset("arm", 400, seed=8, split=(0.8, 0.2, 0.0))
    hist = train_decoder(ds, TrainConfig.default("arm", epochs=6)).history
    vals = [h["val_loss"] for h in hist]
    assert math.isfinite(vals[-1]) and vals[-1] <= 1.05 * min(vals)
    assert hist[-1]["train_loss"] < hist[0]["train_loss"]


def test_arm_do_descends():
    task = get_task("arm")
    ds = gen_dataset("arm", 200, seed=1, split=(0.8, 0.2, 0.0))
    dec = train_decoder(ds, TrainConfig.default("arm", epochs=2)).model
    s = ds.samples[0]
    res = direct_optimize(task, s.goal, dec, config=BfgsConfig(max_iterations=30))
    assert res.objective <= res.initial_objective
    assert np.all(res.design >= 0.8) and np.all(res.design <= 1.2)


def test_arm_direct_learning_bounded():
    ds = gen_dataset("arm", 60, seed=3, split=(0.8, 0.2, 0.0))
    dl = train_direct_learning(ds, TrainConfig.default("arm", epochs=1)).model
    task = get_task("arm")
    for s in ds.samples[:20]:
        th = task.encode(dl, s.goal)
        assert np.all(th >= 0.8) and np.all(th <= 1.2)


def test_robot_eval_rest_pose_succeeds():
    ds = gen_dataset("arm", 40, seed=6, split=(0.0, 0.0, 1.0))
    test = ds.subset("test")
    rest = [Sample(np.ones(40), arm_vertices(np.ones(40)), s.goal) for s in test]
    obs = eval_obstacles(rest, 0, clear_of_sample=True)
    rep = evaluate_robot_method(lambda g: np.ones(40), rest, obstacles=obs)
    assert rep.per_run()[0]["successes"] == len(rest)
    # same seed, same obstacles
    assert all(np.array_equal(a, b) for a, b in zip(eval_obstacles(rest, 0), eval_obstacles(rest, 0)))


def test_robot_eval_boundary_is_failure():
    v = arm_vertices(np.ones(40))
    c = v[30] - [0.9, 0.0]  # left column, exactly radius 0.9 from one vertex
    assert np.min(np.hypot(*(v - c).T)) == pytest.approx(0.9, abs=1e-15)
    s = Sample(np.ones(40), v, np.r_[v[61], c, 0.9])
    rep = evaluate_robot_method(lambda g: np.ones(40), [s], obstacles=[c])
    assert rep.records[0]["success"] == 0 and math.isnan(rep.records[0]["distance"])


def test_robot_eval_records_method_errors():
    ds = gen_dataset("arm", 5, seed=0, split=(0.0, 0.0, 1.0))

    def bad(goal):
        raise RuntimeError("boom")

    rep = evaluate_robot_method(bad, ds.subset("test"))
    assert all("boom" in r["error"] for r in rep.records)


# -- fiber ------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_fiber():
    return gen_dataset("fiber", 12, seed=1, iters_per_path=40, split=(0.5, 0.25, 0.25))


def _polygon_arc(radius, start, count, chord=0.03):
    # vertices of a regular polygon: every chord is exactly ``chord`` long
    step = 2 * np.arcsin(chord / (2 * radius))
    t = start + step * np.arange(count)
    return np.column_stack([radius * np.cos(t), radius * np.sin(t)])


def test_perfect_method_on_identity_simulator():
    cfg = FiberConfig(lag=0.0)
    goals = [_polygon_arc(r, a, k) for r, a, k in [(1.0, 0.0, 150), (0.7, 1.0, 90), (2.5, -2.0, 300)]]
    test = [Sample(g, g, g) for g in goals]
    rep = evaluate_path_method(identity_method, test, "identity", cfg=cfg)
    assert rep.per_run()[0]["chamfer"] < 1e-9


def test_small_fiber_pipeline(small_fiber):
    task = task_for(small_fiber)
    cfg = TrainConfig.default("fiber", epochs=1, hidden=(16,))
    dec = train_decoder(small_fiber, cfg).model
    enc = train_encoder(small_fiber, dec, cfg)
    dl = train_direct_learning(small_fiber, cfg)
    assert all(math.isfinite(h["val_loss"]) for h in enc.history + dl.history)
    test = small_fiber.subset("test")
    rep = evaluate_path_method(encoder_method(task, enc.model), test, "enc")
    assert rep.per_run()[0]["errors"] == 0
    goal = test[0].goal
    res = direct_optimize(task, goal, dec, config=BfgsConfig(max_iterations=5))
    assert res.objective <= res.initial_objective
    assert res.design.shape == task.work_goal(goal).shape


def test_path_chunks_add_up_to_whole_path(small_fiber):
    task = dataclasses.replace(task_for(small_fiber), path_chunk=40)
    dec = init_params(task.decoder_spec((8,)), 0)
    enc = init_params(task.encoder_spec((8,)), 1)
    s = small_fiber.samples[0]
    units = [u for u in task.path_units([s]) if u.goal is not None]
    n = len(task.work_goal(s.goal))
    assert units[0].a == 0 and units[-1].b == n
    assert all(u.b - u.a >= 3 for u in units)
    for loss in (lambda x: task.encoder_loss(enc, dec, [x]), lambda x: task.direct_loss(enc, [x])):
        whole = loss(s)[0]
        parts = sum(loss(u)[0] * (u.b - u.a) for u in units) / n
        assert parts == pytest.approx(whole, rel=1e-12)


def test_fiber_decoder_pairs_share_goal_indices(small_fiber):
    task = task_for(small_fiber)
    s = small_fiber.samples[0]
    th, u = task.decoder_pair(s)
    assert th.shape == u.shape == task.work_goal(s.goal).shape
    units = task.decoder_units([s], seed=3)
    idx = np.sort(np.concatenate([c.index for c in units]))
    assert np.array_equal(idx, np.arange(len(th)))
    # the aligned design lies on the nozzle path, so the simulator reproduces the goal closely
    assert chamfer(s.goal, fiber_realize(th)) < 0.02


def test_identity_on_fiber_is_imperfect(small_fiber):
    rep = evaluate_path_method(identity_method, small_fiber.samples, "identity")
    assert rep.per_run()[0]["chamfer"] > 1e-3


# -- reports and timing -----------------------------------------------------

def test_report_aggregates_over_runs():
    rep = EvalReport("fiber", ("chamfer",))
    for run, vals in enumerate([[1.0, 3.0], [2.0, 2.0], [4.0, 4.0]]):
        for i, v in enumerate(vals):
            rep.records.append({"method": "m", "run": run, "index": i, "chamfer": v, "wall_time": 0.0, "error": ""})
    agg = rep.aggregate()["m"]["chamfer"]
    assert agg["per_run"] == [2.0, 2.0, 4.0]
    assert agg["mean"] == pytest.approx(8 / 3)
    assert agg["stderr"] == pytest.approx(np.std([2, 2, 4], ddof=1) / math.sqrt(3))
    assert rep.to_csv().splitlines()[0] == "method,run,index,chamfer,wall_time,error"


def test_time_inference():
    calls = []
    ts = time_inference(lambda g: calls.append(g), [1, 2], repetitions=5)
    assert len(ts) == 2 and all(t >= 0 for t in ts)
    assert len(calls) == 12  # warm-up plus five timed calls per goal
    with pytest.raises(ValueError):
        time_inference(lambda g: g, [1], repetitions=0)
