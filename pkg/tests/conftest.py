import numpy as np
import pytest

from tempderiv.model import BetaCurve, ModelParams
from tempderiv.seasonal import SeasonalParams

# filled by test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES: dict = {}


def bole_seasonal() -> SeasonalParams:
    return SeasonalParams.from_amplitude_phase(22.15, 4.57e-5, 1.98, -67.71)


def random_params(rng: np.random.Generator, lam=True) -> ModelParams:
    seasonal = SeasonalParams.from_amplitude_phase(
        rng.uniform(18, 30), rng.uniform(-1e-4, 1e-4), rng.uniform(0.5, 3.0), rng.uniform(-np.pi, np.pi))
    beta = BetaCurve(rng.uniform(-0.4, -0.05, 12))
    return ModelParams(seasonal, beta, rng.uniform(0.005, 0.03),
                       rng.uniform(-0.05, 0.05) if lam else 0.0, "rand")


@pytest.fixture
def bole():
    return ModelParams(bole_seasonal(), BetaCurve([-0.25] * 12), 0.01, 0.02, "bole")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


def write_cli_fixtures(root) -> dict:
    """Raw CSV, params JSON and TOML specs for exercising every CLI command."""
    import csv
    import datetime as dt

    from tempderiv.model import simulate

    p = ModelParams(bole_seasonal(), BetaCurve([-0.25] * 12), 0.01, 0.02, "bole")
    T = simulate(p, 0.0, 4 * 365 - 1.0, 1.0, 1, seed=3).paths[0]
    day, rows = dt.date(2000, 1, 1), []
    while len(rows) < len(T):
        if not (day.month == 2 and day.day == 29):
            i = len(rows)
            rows.append([day.isoformat(), "" if i % 97 == 5 else f"{T[i] - 3:.3f}", f"{T[i] + 3:.3f}"])
        day += dt.timedelta(days=1)
    with open(root / "raw.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "t_min", "t_max"])
        w.writerows(rows)
    p.save(root / "p.json")
    p.with_(sigma=0.015, station_id="tamale").save(root / "q.json")
    specs = {
        "cat.toml": 'index = "CAT"\nt1 = 30\nt2 = 60\nt = 0\nT = 24.5\n',
        "catopt.toml": 'index = "CAT"\nt1 = 30\nt2 = 60\nstrike = 712\nexercise = 20\nrate = 0.001\nT = 24.5\n',
        "gdd.toml": 'index = "GDD"\nt1 = 30\nt2 = 60\nthreshold = 24\nlambda = 0.05\n',
        "gddopt.toml": 'index = "GDD"\nt1 = 30\nt2 = 60\nthreshold = 23\nstrike = 22\nexercise = 20\n',
        "sim.toml": 't0 = 0\nt_end = 10\nmeasure = "Q"\n',
        "basket.toml": ('params = ["p.json", "q.json"]\nweights = [0.6, 0.4]\n'
                        'correlation = [[1.0, 0.8733], [0.8733, 1.0]]\nT = [24.0, 23.0]\n'
                        '[contract]\nindex = "GDD"\nt1 = 30\nt2 = 60\nthreshold = 24\n'),
        "ingest.toml": 'k = 3\nstation_id = "bole"\n[columns]\ndate = "date"\nt_min = "t_min"\nt_max = "t_max"\n',
    }
    for name, text in specs.items():
        (root / name).write_text(text)
    rng = np.random.default_rng(0)
    years = range(1990, 2030)
    feats = rng.uniform(10, 30, size=(len(years), 6))
    with open(root / "features.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "minT", "maxT", "aveT", "rainfall", "sunlight", "humidity"])
        for y, f in zip(years, feats):
            w.writerow([y, *[f"{v:.4f}" for v in f]])
    with open(root / "yields.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "yield"])
        for y, f in zip(years, feats):
            w.writerow([y, f"{1.0 + 0.1 * f[2]:.4f}"])
    return {"params": p}


# one invocation per subcommand, relative to the fixture directory
CLI_RUNS = {
    "ingest": ["ingest", "--input", "raw.csv", "--config", "ingest.toml"],
    "fit": ["fit", "--input", "raw.csv"],
    "decompose": ["decompose", "--input", "raw.csv"],
    "calibrate": ["calibrate", "--input", "raw.csv"],
    "simulate": ["simulate", "--params", "p.json", "--spec", "sim.toml", "--paths", "300", "--seed", "4"],
    "price": ["price", "--params", "p.json", "--spec", "gddopt.toml", "--paths", "5000", "--seed", "4"],
    "oracle": ["oracle", "--params", "p.json", "--spec", "gdd.toml", "--paths", "9000", "--seed", "4"],
    "basket": ["basket", "--spec", "basket.toml"],
    "classify": ["classify", "--input", "features.csv", "--yields", "yields.csv", "--repeats", "5", "--seed", "4"],
}
