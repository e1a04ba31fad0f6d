"""Writes data/synthetic_survey.csv: a synthetic cohort with seven covariates,
a binary outcome at the 90th percentile of a latent score, and an exposure
reported with under-reporting. Deterministic for a fixed seed."""

import argparse
import pathlib

import numpy as np


def expit(z):
    return 1.0 / (1.0 + np.exp(-z))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--n", type=int, default=3000)
    ap.add_argument("--zeta0", type=float, default=0.05)
    ap.add_argument("--zeta1", type=float, default=0.10)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "synthetic_survey.csv"))
    a = ap.parse_args()
    rng = np.random.default_rng(a.seed)
    n = a.n

    sex = rng.binomial(1, 0.52, n)
    age = np.round(rng.normal(53.0, 0.8, n), 1)
    father_edu = np.clip(np.round(rng.normal(10.0, 3.0, n)), 0, 20)
    mother_edu = np.clip(np.round(0.5 * father_edu + rng.normal(5.5, 2.2, n)), 0, 20)
    parent_income = np.round(rng.normal(8.5, 0.7, n), 2)
    farm = rng.binomial(1, 0.2, n)
    iq = np.round(rng.normal(100.0, 15.0, n))

    z_edu = (father_edu - 10.0) / 3.0
    z_inc = parent_income - 8.5
    z_iq = (iq - 100.0) / 15.0
    e = expit(-1.0 + 0.3 * sex - 0.4 * z_edu - 0.5 * z_inc + 0.4 * farm - 0.2 * z_iq)
    t = rng.binomial(1, e)

    latent = (0.6 * t + 0.5 * sex - 0.2 * z_edu - 0.3 * z_inc - 0.2 * z_iq
              + 0.1 * (age - 53.0) + rng.logistic(0.0, 1.0, n))
    y = (latent >= np.quantile(latent, 0.9)).astype(int)

    flip = np.where(y == 1, a.zeta1, a.zeta0)
    t_star = np.where((t == 1) & (rng.uniform(size=n) < flip), 0, t)

    cols = [y, t_star, sex, age, father_edu, mother_edu, parent_income, farm, iq]
    header = "y,t_star,sex,age,father_edu,mother_edu,parent_income,farm,iq"
    with open(a.out, "w", newline="\n") as f:
        f.write(header + "\n")
        for row in zip(*cols):
            f.write(",".join(f"{v:g}" for v in row) + "\n")


if __name__ == "__main__":
    main()
