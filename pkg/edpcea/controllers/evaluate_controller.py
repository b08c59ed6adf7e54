"""
Frequentist evaluation harness: repeated simulate -> fit -> estimate per benchmark
setting, scored against the Monte-Carlo potential-outcome truth.
"""
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import binom

from edpcea.config.run_config import RunConfig, workers_from_env
from edpcea.models.estimand_model import EvalReport
from edpcea.models.subject_model import Dataset
from edpcea.repositories.output_repository import OutputRepository
from edpcea.services.edp_sampler_service import run_chains
from edpcea.services.gcomp_service import gcomp_store, psi_values, summarize_nmb
from edpcea.services.simulator_service import MIN_ORACLE_REPS, SETTINGS, oracle_truth, setting_config, simulate
from edpcea.utils.errors import ValidationError
from edpcea.utils.logger import get_logger

DESK_REPLICATES = 50
DESK_N = 500
EXCLUSION_LIMIT = 0.05
NOMINAL_COVERAGE = 0.95

RECORD_COLUMNS = ["setting", "replicate", "data_seed", "mcmc_seed", "psi_true", "psi_true_se", "psi_mean",
                  "lo95", "hi95", "width", "covers", "rel_bias", "abs_rel_bias", "draws", "ok", "error"]

logger = get_logger()


def replicate_seeds(seed, setting, replicate):
    """Independent (data, mcmc) seeds of one replicate, fixed by position not by schedule."""
    setting_idx = list(SETTINGS).index(setting)
    state = np.random.SeedSequence([int(seed), setting_idx, int(replicate)]).generate_state(2)
    return int(state[0]), int(state[1])


def run_replicate(setting, replicate, n, seed, kappa, config_values, truth):
    """
    One replicate: simulate, fit, estimate Psi at kappa and score it against the truth.
    Failures are returned as a record with ok=False instead of raising.
    """
    data_seed, mcmc_seed = replicate_seeds(seed, setting, replicate)
    record = {key: None for key in RECORD_COLUMNS}
    record.update({"setting": setting, "replicate": int(replicate), "data_seed": data_seed,
                   "mcmc_seed": mcmc_seed, "psi_true": truth["psi"], "psi_true_se": truth["psi_se"],
                   "ok": False, "error": ""})
    try:
        config = RunConfig(**{**config_values, "seed": mcmc_seed, "kappa": kappa})
        simulated, _ = simulate(setting_config(setting, n=n, seed=data_seed, kappa=kappa))
        dataset = Dataset(simulated.subjects, cost_model=config.cost_model, add_intercept=config.add_intercept)
        store = run_chains(dataset, config, workers=1)
        summary = summarize_nmb(psi_values(gcomp_store(store, kappa), kappa))
    except Exception as e:  # one bad replicate must not end the study
        logger.error(f"Replicate {setting}/{replicate} failed: {type(e).__name__}: {e}")
        record["error"] = f"{type(e).__name__}: {e}"
        return record
    record.update(score_replicate(summary.mean, summary.lo95, summary.hi95, truth["psi"]))
    record.update({"psi_mean": summary.mean, "lo95": summary.lo95, "hi95": summary.hi95,
                   "draws": summary.draws, "ok": True})
    return record


def score_replicate(psi_mean, lo95, hi95, psi_true):
    bias = psi_mean - psi_true
    rel = bias / abs(psi_true) if psi_true != 0 else float("nan")
    return {
        "width": hi95 - lo95,
        "covers": bool(lo95 <= psi_true <= hi95),
        "rel_bias": rel,
        "abs_rel_bias": abs(rel),
    }


def coverage_band(replicates, nominal=NOMINAL_COVERAGE):
    """Central 95% binomial band of empirical coverage at the nominal level."""
    lo, hi = binom.interval(0.95, replicates, nominal)
    return float(lo) / replicates, float(hi) / replicates


def aggregate_records(records: pd.DataFrame, fingerprint: str) -> EvalReport:
    """
    Per-setting operating characteristics, computed from the replicate records alone.
    Scores are recomputed from (psi_mean, lo95, hi95, psi_true) so persisted records reproduce the report.
    """
    if records.empty:
        raise ValidationError("no replicate records to aggregate", field="records")
    rows = []
    for setting, group in records.groupby("setting", sort=False):
        ok = group["ok"].astype(bool)
        kept = group[ok]
        total = len(group)
        excluded = int((~ok).sum())
        row = {
            "setting": setting,
            "replicates": total,
            "excluded": excluded,
            "psi_true": float(group["psi_true"].iloc[0]),
            "psi_true_se": float(group["psi_true_se"].iloc[0]),
            "rel_bias": None,
            "abs_rel_bias": None,
            "coverage": None,
            "width": None,
            "coverage_band_lo": None,
            "coverage_band_hi": None,
            "exclusion_flag": excluded / total > EXCLUSION_LIMIT,
        }
        if len(kept):
            scores = pd.DataFrame([score_replicate(m, lo, hi, t) for m, lo, hi, t in
                                   zip(kept["psi_mean"], kept["lo95"], kept["hi95"], kept["psi_true"])])
            band = coverage_band(len(kept))
            row.update({
                "rel_bias": float(scores["rel_bias"].mean()),
                "abs_rel_bias": float(scores["abs_rel_bias"].mean()),
                "coverage": float(scores["covers"].mean()),
                "width": float(scores["width"].mean()),
                "coverage_band_lo": band[0],
                "coverage_band_hi": band[1],
            })
        if row["exclusion_flag"]:
            logger.warning(f"{setting}: {excluded} of {total} replicates excluded")
        rows.append(row)
    return EvalReport(rows, fingerprint)


class EvaluateController:
    """
    Runs the simulation study.

    Args:
        config: Sampler configuration shared by every replicate; the seed is replaced per replicate.
        settings: Names from SETTINGS.
        replicates: R >= 2 per setting.
        n: Subjects per simulated dataset.
        oracle_reps: Monte-Carlo size of the truth, at least MIN_ORACLE_REPS.
        truths: Precomputed oracle results per setting, skipping the oracle.
    """

    def __init__(self, config: RunConfig, settings: Optional[Sequence[str]] = None, replicates=DESK_REPLICATES,
                 n=DESK_N, oracle_reps=MIN_ORACLE_REPS, truths: Optional[Dict[str, dict]] = None,
                 workers: Optional[int] = None):
        self.config = config
        self.settings = list(settings or ["parametric_low", "bimodal_low"])
        self.replicates = int(replicates)
        self.n = int(n)
        self.oracle_reps = int(oracle_reps)
        self.truths = dict(truths or {})
        self.workers = workers_from_env() if workers is None else int(workers)
        self.logger = get_logger()
        if self.replicates < 2:
            raise ValidationError(f"need at least 2 replicates, got {self.replicates}", field="replicates")
        for setting in self.settings:
            if setting not in SETTINGS:
                raise ValidationError(f"unknown setting '{setting}', expected one of {list(SETTINGS)}",
                                      field="setting")

    def truth(self, setting):
        if setting not in self.truths:
            dgp = setting_config(setting, n=self.n, seed=self.config.seed, kappa=self.config.kappa)
            self.logger.info(f"Oracle truth for {setting} with {self.oracle_reps} replicates")
            self.truths[setting] = oracle_truth(dgp, reps=self.oracle_reps)
        return self.truths[setting]

    def tasks(self):
        values = self.config.to_dict()
        for setting in self.settings:
            truth = self.truth(setting)
            for r in range(self.replicates):
                yield (setting, r, self.n, self.config.seed, self.config.kappa, values, truth)

    def run(self) -> pd.DataFrame:
        tasks = list(self.tasks())
        self.logger.info(f"Evaluating {len(self.settings)} settings x {self.replicates} replicates, "
                         f"n={self.n}, workers={self.workers}")
        if self.workers > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                records: List[dict] = list(pool.map(run_replicate, *zip(*tasks)))
        else:
            records = [run_replicate(*task) for task in tasks]
        return pd.DataFrame(records, columns=RECORD_COLUMNS)

    def evaluate(self, out_dir: Optional[str] = None) -> EvalReport:
        """Run, aggregate and, when out_dir is given, persist replicate_records.csv and eval_report.csv."""
        records = self.run()
        report = aggregate_records(records, self.config.fingerprint())
        if out_dir:
            repo = OutputRepository(out_dir, {"fingerprint": self.config.fingerprint(),
                                              "config": self.config.to_dict(),
                                              "evaluate": {"settings": self.settings, "replicates": self.replicates,
                                                           "n": self.n, "oracle_reps": self.oracle_reps}})
            repo.write("replicate_records.csv", records)
            repo.write("eval_report.csv", pd.DataFrame(report.rows))
        return report
