"""Synthetic benchmark table with a skewed, non-iid split column.

Generative process, per row:

* ``region`` ~ Categorical(north .45, south .30, east .15, west .10). This is
  the split column; the three most frequent regions become three clients and
  ``west`` rows are dropped by the partitioner.
* ``channel`` | region ~ Categorical over (online, branch, phone) with
  region-specific probabilities (north favours online, south branch, east
  phone, west uniform). This is the label column.
* ``age`` | region ~ mixture of N(30, 5^2) and N(55, 7^2); the weight of the
  young component is .8 / .5 / .2 / .5 for north / south / east / west.
* ``amount`` | region, channel = exp(N(mu_region + .3 * [online], .4^2)) with
  mu = 3.0 / 4.0 / 5.0 / 3.5.
* ``score`` = .05 * age + shift_region + N(0, .5^2), shift = 0 / 1.5 / -1.5 / 0.
"""
from __future__ import annotations

import numpy as np

from .schema import CATEGORICAL, NUMERIC, Column, TableData, TableSchema

REGIONS = ["north", "south", "east", "west"]
REGION_P = [0.45, 0.30, 0.15, 0.10]
CHANNELS = ["online", "branch", "phone"]
CHANNEL_P = {
    "north": [0.7, 0.2, 0.1],
    "south": [0.2, 0.6, 0.2],
    "east": [0.1, 0.2, 0.7],
    "west": [1 / 3, 1 / 3, 1 / 3],
}
YOUNG_WEIGHT = {"north": 0.8, "south": 0.5, "east": 0.2, "west": 0.5}
AMOUNT_MU = {"north": 3.0, "south": 4.0, "east": 5.0, "west": 3.5}
SCORE_SHIFT = {"north": 0.0, "south": 1.5, "east": -1.5, "west": 0.0}

TOY_SCHEMA = TableSchema(
    columns=(
        Column("age", NUMERIC),
        Column("amount", NUMERIC),
        Column("score", NUMERIC),
        Column("region", CATEGORICAL),
        Column("channel", CATEGORICAL),
    ),
    label_column="channel",
    split_column="region",
)


def generate_toy(n_rows: int = 5000, seed: int = 0) -> TableData:
    rng = np.random.default_rng(seed)
    region_idx = rng.choice(len(REGIONS), size=n_rows, p=REGION_P)
    regions = [REGIONS[i] for i in region_idx]
    channels, ages, amounts, scores = [], [], [], []
    for r in regions:
        ch = CHANNELS[rng.choice(3, p=CHANNEL_P[r])]
        if rng.random() < YOUNG_WEIGHT[r]:
            age = rng.normal(30.0, 5.0)
        else:
            age = rng.normal(55.0, 7.0)
        amount = np.exp(rng.normal(AMOUNT_MU[r] + 0.3 * (ch == "online"), 0.4))
        score = 0.05 * age + SCORE_SHIFT[r] + rng.normal(0.0, 0.5)
        channels.append(ch)
        ages.append(round(age, 3))
        amounts.append(round(amount, 2))
        scores.append(round(score, 4))
    columns = {"age": ages, "amount": amounts, "score": scores, "region": regions, "channel": channels}
    return TableData.from_columns(TOY_SCHEMA, columns)
