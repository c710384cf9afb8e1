#!/usr/bin/env python3
"""The three construction strategies on one synthetic task.

Five frozen components of graded quality feed a greedy chain (one
component per depth), a balanced merge tree over the four best, and the
exhaustive frozen/open search.  Step tables mirror the construction
reports: candidate, train/test RMSE, per-step trainable parameters, and
the front-runner mark.
"""

import numpy as np

import compnet as cn


def show(report):
    print(f"\n=== {report.algorithm} (insertion order {', '.join(report.order)}) ===")
    for step in report.steps:
        print(f"-- {step.label}")
        for cand in step.candidates:
            mark = "  <- front-runner" if cand.description == step.front_runner else ""
            print(
                f"   {cand.description:<22} train {np.sqrt(cand.train_loss):.4f}  "
                f"test {np.sqrt(cand.test_loss):.4f}  ({cand.trainable}/{cand.total}){mark}"
            )
    for note in report.notes:
        print(f"   note: {note}")
    print(
        f"final: depth {report.final_depth} of {report.pruned_from}, "
        f"train RMSE {np.sqrt(report.final_train_loss):.4f}, "
        f"test RMSE {np.sqrt(report.final_test_loss):.4f}"
    )


def main():
    spec = cn.SyntheticTaskSpec(
        n=200,
        d=6,
        m=1,
        true_function="mlp-teacher",
        noise_sd=0.02,
        component_quality=(0.12, 0.2, 0.3, 0.42, 0.55),
        seed=17,
    )
    data, comps = cn.generate_synthetic(spec)
    print("single-component test RMSE:")
    for c in comps:
        print(f"  {c.id}: {np.sqrt(cn.component_loss(c, data, 'test')):.4f}")

    cfg = cn.ConstructionConfig(
        k0=4,
        train_cfg=cn.TrainConfig(max_epochs=60, early_stop_patience=15, seed=1),
    )
    show(cn.dbcn(comps, data, cfg))
    show(cn.bbcn(comps, data, cfg))
    show(cn.exhaustive(comps, data, cfg))


if __name__ == "__main__":
    main()
