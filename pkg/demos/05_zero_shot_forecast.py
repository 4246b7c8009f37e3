"""Zero-shot queue forecasting on the synthetic generator."""

from nosnet.forecasting import METHODS, SyntheticQueueSpec, evaluate_zero_shot

res = evaluate_zero_shot(SyntheticQueueSpec(topology="scale-free"), seed=0)
print(f"{'method':>15} {'MAE':>8} {'AUROC':>7} {'AUPRC':>7} {'F1':>6}")
for m in METHODS:
    r = res["metrics"][m]
    print(f"{m:>15} {r['mae']:8.3f} {r['auroc']:7.3f} {r['auprc']:7.3f} {r['f1']:6.3f}")
