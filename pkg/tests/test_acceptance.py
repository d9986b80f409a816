"""Acceptance criteria, each checked at its stated tolerance and time budget.

Every test prints one ``PASS``/``FAIL`` line (also repeated in the pytest
terminal summary) before asserting.  Criteria 5 and 6 train from scratch
and take several minutes each; they carry the ``slow`` marker.
"""

import time

import numpy as np
import pytest

from conftest import VERDICTS
from fastdsac import checkpoint
from fastdsac.actor import DEMConfig, dem_weights
from fastdsac.cli import main
from fastdsac.critic import c51_project
from fastdsac.experiments import run_chain_oracle, run_control, run_entropy_sink
from fastdsac.gradcheck import run_gradcheck


def verdict(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{criterion}] {detail}"
    VERDICTS.append(line)
    print(line)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# -- 1 ---------------------------------------------------------------------------------------


def test_gradient_fidelity():
    with Timer() as t:
        summary = run_gradcheck(seed=0, instances=100, h=1e-4, tol=1e-4)
    worst = max(r.max_rel_error for r in summary.reports.values())
    errors = " ".join(f"{k}={r.max_rel_error:.2e}" for k, r in summary.reports.items())
    ok = summary.passed and worst <= 1e-4 and t.seconds <= 60
    verdict("1 gradient fidelity", ok, f"{errors} instances=100 time={t.seconds:.1f}s")
    assert summary.passed, summary.failing
    assert t.seconds <= 60


# -- 2 ---------------------------------------------------------------------------------------


def test_dem_algebra():
    rng = np.random.default_rng(0)
    cfg = DEMConfig()
    draws = 10_000
    budget = uniform = 0.0
    argmax_ok = sharpen_ok = True
    with Timer() as t:
        for _ in range(draws):
            n = int(rng.integers(1, 17))
            logits = rng.normal(0.0, rng.uniform(0.1, 5.0), n)
            tau = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
            beta = float(rng.uniform(cfg.beta_min, cfg.beta_max))
            w = dem_weights(logits, tau, beta)
            budget = max(budget, abs(w.mean() - 1.0))
            uniform = max(uniform, np.abs(dem_weights(logits, 1e6, beta) - 1.0).max())
            argmax_ok &= int(np.argmax(w)) == int(np.argmax(logits))
            sharp = dem_weights(logits, tau, cfg.beta_max).max()
            flat = dem_weights(logits, tau, cfg.beta_min).max()
            sharpen_ok &= bool(sharp >= flat)
    ok = budget <= 1e-12 and uniform <= 1e-3 and argmax_ok and sharpen_ok and t.seconds <= 10
    verdict(
        "2 DEM algebra", ok,
        f"budget_err={budget:.1e} uniform_err={uniform:.1e} argmax={argmax_ok} "
        f"sharpening={sharpen_ok} time={t.seconds:.1f}s",
    )
    assert ok


# -- 3 ---------------------------------------------------------------------------------------


def test_c51_projection():
    rng = np.random.default_rng(0)
    mass = expect = 0.0
    with Timer() as t:
        for _ in range(10_000):
            n = int(rng.integers(2, 52))
            v_min = rng.uniform(-20.0, 5.0)
            atoms = np.linspace(v_min, v_min + rng.uniform(0.5, 30.0), n)
            probs = rng.dirichlet(np.full(n, 0.5))
            r, gamma = rng.uniform(-5.0, 5.0), rng.uniform(0.0, 1.0)
            done = float(rng.random() < 0.1)
            m = c51_project(r, gamma, done, probs, atoms)
            mass = max(mass, abs(m.sum() - 1.0))
            # reference: mean of the shifted support, clamped into range
            shifted = np.clip(r + (1.0 - done) * gamma * atoms, atoms[0], atoms[-1])
            spacing = atoms[1] - atoms[0]
            expect = max(expect, abs(m @ atoms - probs @ shifted) / spacing)
        hand = c51_project(1.0, 0.5, 0.0, np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 2.0])
    hand_ok = np.array_equal(hand, [0.0, 1.0, 0.0])
    ok = mass <= 1e-9 and expect <= 1.0 and hand_ok and t.seconds <= 10
    verdict(
        "3 C51 projection", ok,
        f"mass_err={mass:.1e} mean_err={expect:.1e} (atom spacings) hand_example={hand.tolist()} "
        f"time={t.seconds:.1f}s",
    )
    assert ok


# -- 4 ---------------------------------------------------------------------------------------


def test_value_oracle_continuous():
    with Timer() as t:
        res = run_chain_oracle("continuous", updates=10_000)
    sigma_ok = bool(np.all(res.sigma <= 5 * res.sigma_floor))
    ok = res.max_rel_error <= 0.02 and sigma_ok and t.seconds <= 300
    verdict(
        "4a value oracle, continuous critic", ok,
        f"max_rel_err={res.max_rel_error:.4f} max_sigma={res.sigma.max():.4f} "
        f"(limit {5 * res.sigma_floor:.4f}) updates={res.updates} time={t.seconds:.1f}s",
    )
    assert ok


def test_value_oracle_c51_gap():
    with Timer() as t:
        res = run_chain_oracle("c51", updates=10_000, n_atoms=5)
    quarter = res.atom_spacing / 4
    ok = res.max_abs_gap >= quarter and t.seconds <= 300
    verdict(
        "4b value oracle, C51 quantization gap", ok,
        f"max_gap={res.max_abs_gap:.4f} quarter_spacing={quarter:.4f} "
        f"q={np.round(res.q, 4).tolist()} analytic={np.round(res.q_analytic, 4).tolist()} "
        f"time={t.seconds:.1f}s",
    )
    assert ok


# -- 5 ---------------------------------------------------------------------------------------


@pytest.mark.slow
def test_entropy_sink():
    results = [run_entropy_sink(seed, env_steps=50_000) for seed in range(3)]
    wins = sum(r.passed for r in results)
    slowest = max(r.seconds for r in results)
    detail = " | ".join(
        f"seed {r.seed}: ratio={r.ratio:.2f} dem={r.eval_dem:.3f} std={r.eval_standard:.3f}"
        for r in results
    )
    ok = wins >= 2 and slowest <= 1800
    verdict("5 entropy sink", ok, f"{wins}/3 seeds; {detail}; slowest={slowest:.0f}s")
    assert ok


# -- 6 ---------------------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.parametrize("actor_kind", ["standard", "dem"])
def test_control_sanity(actor_kind):
    results = [run_control(actor_kind, seed, env_steps=100_000) for seed in range(3)]
    wins = sum(r.eval_return >= -250 for r in results)
    entropy_ok = all(abs(r.entropy_running_mean) <= 0.5 for r in results)
    slowest = max(r.seconds for r in results)
    detail = " | ".join(
        f"seed {r.seed}: return={r.eval_return:.1f} -logpi={r.entropy_running_mean:.3f}"
        for r in results
    )
    ok = wins >= 2 and entropy_ok and slowest <= 2700
    verdict(f"6 control sanity, {actor_kind}", ok, f"{wins}/3 seeds; {detail}; slowest={slowest:.0f}s")
    assert ok


# -- 7 ---------------------------------------------------------------------------------------


def test_reproducibility_and_io(tmp_path):
    base = [
        "train", "--set", "env=redundant_reacher", "--set", "total_steps=300",
        "--set", "num_envs=4", "--set", "batch_size=64", "--set", "learning_starts=256",
        "--set", "hidden_widths=[32,32]", "--set", "seed=3",
    ]
    with Timer() as t:
        codes = [main(base + ["--set", f"out_dir={tmp_path / name}"]) for name in ("a", "b")]
        same = (tmp_path / "a" / "metrics.csv").read_bytes() == (
            tmp_path / "b" / "metrics.csv").read_bytes()
        path = tmp_path / "a" / "checkpoints" / "final.ckpt"
        blob = path.read_bytes()
        checkpoint.save(tmp_path / "copy.ckpt", checkpoint.load(path))
        round_trip = (tmp_path / "copy.ckpt").read_bytes() == blob
        heat = tmp_path / "heat.csv"
        codes.append(main(["heatmap", "--checkpoint", str(path), "--out", str(heat)]))
        w = np.loadtxt(heat, delimiter=",", skiprows=1)
        row_err = float(np.abs(w.mean(axis=1) - 1.0).max())
    ok = codes == [0, 0, 0] and same and round_trip and row_err <= 1e-9 and t.seconds <= 300
    verdict(
        "7 reproducibility and I/O", ok,
        f"metrics_identical={same} checkpoint_round_trip={round_trip} "
        f"heatmap_row_err={row_err:.1e} rows={w.shape[0]} time={t.seconds:.1f}s",
    )
    assert ok
