"""Regenerate the synthetic sample series shipped in nonlinear_assim/data.

The series only mimic the broad shape of the public records (a PCHIP curve
through rough decadal anchor values plus white noise). They are stand-ins
for hermetic tests and demos, not observational data.
"""

from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

OUT = Path(__file__).resolve().parents[1] / "src" / "nonlinear_assim" / "data"
SEED = 20240601

# (year, global temperature anomaly degC)
TEMP_ANCHORS = [
    (1880, -0.17), (1890, -0.25), (1900, -0.20), (1910, -0.40), (1920, -0.27),
    (1930, -0.15), (1940, 0.08), (1950, -0.05), (1960, -0.02), (1970, 0.03),
    (1980, 0.26), (1990, 0.45), (2000, 0.42), (2010, 0.72), (2020, 1.01), (2023, 1.17),
]
TEMP_NOISE = 0.06

# (year, global mean sea level mm relative to 1880)
SEA_ANCHORS = [
    (1880, 0.0), (1900, 18.0), (1920, 42.0), (1940, 75.0), (1960, 110.0),
    (1980, 150.0), (2000, 195.0), (2021, 262.0),
]
SEA_NOISE = 3.7


def synth(anchors, first, last, noise, rng):
    years = np.arange(first, last + 1)
    a = np.array(anchors, dtype=float)
    return years, PchipInterpolator(a[:, 0], a[:, 1])(years) + noise * rng.standard_normal(years.size)


def write(path, header, years, values, decimals):
    lines = [f"# {h}" for h in header] + ["year,value"]
    lines += [f"{y},{v:.{decimals}f}" for y, v in zip(years, values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main():
    rng = np.random.default_rng(SEED)
    y, v = synth(TEMP_ANCHORS, 1880, 2023, TEMP_NOISE, rng)
    write(
        OUT / "temperature_anomaly_synthetic.csv",
        ["SYNTHETIC global temperature anomaly (degC), not observational data.",
         f"PCHIP through decadal anchors + N(0, {TEMP_NOISE}^2); see scripts/make_synthetic_data.py"],
        y, v, 2,
    )
    y, v = synth(SEA_ANCHORS, 1880, 2021, SEA_NOISE, rng)
    write(
        OUT / "sea_level_mm_synthetic.csv",
        ["SYNTHETIC global mean sea level (mm), not observational data.",
         f"PCHIP through anchors + N(0, {SEA_NOISE}^2); see scripts/make_synthetic_data.py"],
        y, v, 1,
    )


if __name__ == "__main__":
    main()
