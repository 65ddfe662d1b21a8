"""Time the E-step kernel on each available backend.

    python benchmarks/bench_estep.py [--docs 2000] [--vocab 5000] [--topics 50] [--repeat 3]
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from agora_polar import _backend, lda
from agora_polar.lda import LdaConfig
from agora_polar.synth import GroupSpec, SynthPlan, generate_corpus


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--docs", type=int, default=2000)
    parser.add_argument("--vocab", type=int, default=5000)
    parser.add_argument("--topics", type=int, default=50)
    parser.add_argument("--doc-length", type=int, default=200)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--workers", type=int, nargs="+", default=[1, 4])
    args = parser.parse_args(argv)

    plan = SynthPlan(
        K_true=args.topics,
        V=args.vocab,
        groups=[GroupSpec("A", args.docs, [0.1] * args.topics)],
        doc_length=args.doc_length,
        seed=0,
    )
    _, corpus, _ = generate_corpus(plan)
    cfg = LdaConfig(K=args.topics, seed=0)
    model = lda.init_model(corpus.V, cfg)
    # a few updates so the topics are not flat
    model = lda.train(corpus, replace(cfg, batch_size=256, passes=1))
    index = np.arange(len(corpus), dtype=np.int64)

    print(f"{args.docs} docs, V={corpus.V}, K={args.topics}, {corpus.total_tokens} tokens")
    print(f"{'backend':<8} {'workers':>7} {'seconds':>9} {'docs/s':>10} {'speedup':>8}")
    baseline = None
    reference = None
    for name in sorted(_backend.AVAILABLE, key=lambda n: n != "python"):
        for workers in args.workers:
            seconds, (gamma, sstats) = best_of(
                lambda: lda._raw_e_step(model, corpus, index, workers=workers, backend=name), args.repeat
            )
            if reference is None:
                reference = gamma, sstats
            else:
                np.testing.assert_allclose(gamma, reference[0], rtol=1e-10)
                np.testing.assert_allclose(sstats, reference[1], rtol=1e-10)
            baseline = baseline or seconds
            print(f"{name:<8} {workers:>7} {seconds:>9.3f} {args.docs / seconds:>10.0f} {baseline / seconds:>7.1f}x")


if __name__ == "__main__":
    main()
