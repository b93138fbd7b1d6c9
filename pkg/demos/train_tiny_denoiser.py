"""Train a small complex and real denoiser on a few simulated pairs.

Runs in about a minute on one core; the sizes are far below the desk
experiment, so expect modest numbers.

    python demos/train_tiny_denoiser.py
"""

from cvrd.metrics import MetricsReport, evaluate_sample
from cvrd.models import build_model, complexity, denoise_batch, train
from cvrd.radar import RadarParams, SceneDistribution, generate_dataset

params, dist = RadarParams(), SceneDistribution()
train_pairs = generate_dataset(40, params, dist, seed=1)
eval_pairs = generate_dataset(10, params, dist, seed=1, stream=1)


def score(maps):
    rows = [evaluate_sample(m.physical(), p.clean.physical()) for m, p in zip(maps, eval_pairs)]
    return MetricsReport.from_samples(*zip(*rows))


base = score([p.interfered for p in eval_pairs])
print(f"no mitigation   F1 {base.f1:.3f}  EVM {base.evm:.3f}  PPMSE {base.ppmse_rad2:.4f}")
for spec in ("C-4-2-1", "R-8-4-2"):
    info = complexity(spec)
    model = build_model(spec, init_seed=0)
    result = train(model, train_pairs, epochs=3, seed=0,
                   on_epoch=lambda e, loss: print(f"  {spec} epoch {e}: loss {loss:.4f}"))
    rep = score(denoise_batch(model, [p.interfered for p in eval_pairs]))
    print(f"{spec:8s} ({info.param_count} params, {info.mflop_per_rdmap:.1f} MFLOP)  "
          f"F1 {rep.f1:.3f}  EVM {rep.evm:.3f}  PPMSE {rep.ppmse_rad2:.4f}")
