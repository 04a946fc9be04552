#!/usr/bin/env python3
"""Regenerate the bundled demo: dataset, schema, ground-truth structures, config.

Writes everything under data/ (relative to the repository root). The dataset
is sampled from the declared benchmark network, so the demo pipeline can be
checked against a known answer.
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from bnpipeline.bayesnet import write_structure
from bnpipeline.dataset import write_csv, write_schema
from bnpipeline.simulate import benchmark_alternative, benchmark_network, sample_dataset

N_RECORDS = 1000
DATA_SEED = 11

CONFIG = """\
# Demo pipeline over the bundled synthetic dataset.
[data]
dataset = data/synthetic.csv
schema = data/synthetic.schema

[selection]
min_mi = 0.002
min_cmi = 0.002

[learn]
learners = hc, chowliu, tan, naive
user_structures = truth=data/truth.structure, alt=data/alt.structure

[split]
seed = 7
test_fraction = 0.15
fold_count = 10
fold_fraction = 0.08

[mcmc]
chains = 3
adapt_iters = 500
burnin_iters = 500
sample_iters = 2000

[predict]
mode = mcmc
cv_mode = exact

[output]
dir = out
rhat_threshold = 1.1
"""


def main() -> None:
    root = Path(__file__).resolve().parents[1]
    data_dir = root / "data"
    data_dir.mkdir(exist_ok=True)
    dag, schema, tables = benchmark_network()
    data = sample_dataset(dag, schema, tables, N_RECORDS, seed=DATA_SEED)
    write_csv(data, data_dir / "synthetic.csv")
    write_schema(schema, data_dir / "synthetic.schema")
    write_structure(dag, data_dir / "truth.structure")
    write_structure(benchmark_alternative(dag), data_dir / "alt.structure")
    (data_dir / "pipeline.ini").write_text(CONFIG, encoding="utf-8")
    print(f"wrote demo inputs under {data_dir}")


if __name__ == "__main__":
    main()
