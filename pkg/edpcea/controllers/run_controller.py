import os
from typing import List, Optional

import markdown
import numpy as np
import pandas as pd

from edpcea.config.run_config import RunConfig, workers_from_env
from edpcea.models.draw_model import DrawStore
from edpcea.models.estimand_model import GcompDraw
from edpcea.repositories.dataset_repository import load_dataset, write_dataset
from edpcea.repositories.draw_repository import DrawRepository
from edpcea.repositories.output_repository import OutputRepository, read_frame, read_provenance
from edpcea.services import gcomp_service, subgroup_service
from edpcea.services.edp_sampler_service import prepare_run, run_chains
from edpcea.services.gamma_process_service import (hazard_paths_frame, hazard_summary, prior_predictive_draws)
from edpcea.services.simulator_service import DGPConfig, simulate, write_truth
from edpcea.utils.errors import ArtifactError
from edpcea.utils.logger import get_logger

PLOT_SELECTORS = ("prior-hazard", "hazard", "ite", "graph", "dsi", "predictive")
PRIOR_HAZARD_PATHS = 20
GCOMP_DRAWS_FILE = "draws_gcomp.jsonl"


class RunController:
    """
    Orchestrates one analysis: simulate, fit, estimate, subgroups, summarize, plot data.
    Every step reads and writes files so steps can run as separate CLI calls.
    """

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = config or RunConfig()
        self.logger = get_logger()

    def _provenance(self, fingerprint=None, config=None):
        return {"fingerprint": fingerprint or self.config.fingerprint(), "config": config or self.config.to_dict()}

    # simulate / fit

    def simulate(self, dgp: DGPConfig, out: str, truth_out: Optional[str] = None):
        dataset, truth = simulate(dgp)
        write_dataset(dataset, out)
        if truth_out:
            write_truth(truth, truth_out)
        return dataset

    def fit(self, data_path: str, out: str, workers: Optional[int] = None) -> DrawStore:
        dataset = load_dataset(data_path, self.config.cost_model, self.config.add_intercept)
        workers = workers_from_env() if workers is None else workers
        store = run_chains(dataset, self.config, workers)
        DrawRepository(out).save(store)
        return store

    # estimation

    def _gcomp(self, store: DrawStore, kappa: float) -> List[GcompDraw]:
        if store.has_gcomp():
            return [GcompDraw.from_record(r, kappa) for r in store.records]
        return gcomp_service.gcomp_store(store, kappa)

    def estimate(self, draws_path: str, out_dir: str, kappa: Optional[float] = None):
        """
        Writes nmb_draws.csv, nmb_summary.csv, ceac.csv, icer_draws.csv, ite_summary.csv
        and the draws with their g-computation output attached.
        """
        store = DrawRepository(draws_path).load()
        kappa = self.config.kappa if kappa is None else float(kappa)
        gdraws = self._gcomp(store, kappa)
        kappas = sorted(set(float(k) for k in self.config.kappa_grid) | {kappa})
        repo = OutputRepository(out_dir, self._provenance(store.meta.get("fingerprint"), store.meta.get("config")))

        rows = []
        for m, g in enumerate(gdraws):
            for k in kappas:
                rows.append((m, g.chain, g.iteration, k, g.psi_at(k)))
        repo.write("nmb_draws.csv", pd.DataFrame(rows, columns=["m", "chain", "iteration", "kappa", "psi"]))

        summaries = []
        for k in kappas:
            summary = gcomp_service.summarize_nmb(gcomp_service.psi_values(gdraws, k))
            summaries.append({"kappa": k, **summary.to_dict()})
        repo.write("nmb_summary.csv", pd.DataFrame(summaries))

        curve = gcomp_service.ceac(gdraws, kappas)
        repo.write("ceac.csv", pd.DataFrame(curve.rows(), columns=["kappa", "prob"]))

        result = gcomp_service.icer(gdraws)
        repo.write("icer_draws.csv", pd.DataFrame({
            "m": np.arange(len(gdraws)),
            "chain": [g.chain for g in gdraws],
            "iteration": [g.iteration for g in gdraws],
            "delta_t": [g.weighted_delta_t for g in gdraws],
            "delta_y": [g.weighted_delta_y for g in gdraws],
            "icer": result.ratios,
            "flagged": result.flagged.astype(int),
        }))
        repo.write("ite_summary.csv", gcomp_service.ite_summary(gdraws, kappa))
        DrawRepository(os.path.join(out_dir, GCOMP_DRAWS_FILE)).save(store)
        return gdraws

    # subgroups

    def _psi_rows(self, gdraws, kappa):
        return np.array([g.psi_i_at(kappa) for g in gdraws])

    def subgroups(self, draws_path: str, out_dir: str, kappa: Optional[float] = None,
                  threshold: Optional[float] = None):
        """Writes coclust.csv, coclust_omega.csv, mode_partition.csv, dsi_draws.csv, graph and profiles."""
        store = DrawRepository(draws_path).load()
        kappa = self.config.kappa if kappa is None else float(kappa)
        threshold = self.config.threshold if threshold is None else float(threshold)
        gdraws = self._gcomp(store, kappa)
        dataset = store.dataset()
        repo = OutputRepository(out_dir, self._provenance(store.meta.get("fingerprint"), store.meta.get("config")))

        P = subgroup_service.coclustering_probability(store)
        P_omega = subgroup_service.coclustering_probability(store, level="omega")
        mode, mode_idx = subgroup_service.mode_partition(store, P)
        psi_rows = self._psi_rows(gdraws, kappa)
        dsi_frame = subgroup_service.dsi(psi_rows, store, np.array([g.weights for g in gdraws]))
        edges, nodes = subgroup_service.export_graph(P, threshold, mode, psi_rows.mean(axis=0))

        repo.write("coclust.csv", subgroup_service.lower_triangle_frame(P))
        repo.write("coclust_omega.csv", subgroup_service.lower_triangle_frame(P_omega))
        repo.write("mode_partition.csv", pd.DataFrame({"i": np.arange(len(mode)), "j": mode[:, 0], "k": mode[:, 1]}))
        repo.write("dsi_draws.csv", dsi_frame)
        repo.write("graph_edges.csv", edges)
        repo.write("graph_nodes.csv", nodes)
        repo.write("cluster_profiles.csv", subgroup_service.cluster_profiles(dataset, mode))
        self.logger.info(f"Mode partition taken from draw {mode_idx}; "
                         f"{int(dsi_frame.attrs.get('missing', 0))} draws without DSI")
        return P, mode, dsi_frame

    # reports

    def summarize(self, artifact: str, html: bool = False) -> str:
        """Markdown report of a dataset, draw file or CSV artifact; HTML when asked."""
        if not os.path.exists(artifact):
            raise ArtifactError(f"artifact not found: {artifact}")
        if artifact.endswith(".jsonl"):
            text = self._summarize_draws(DrawRepository(artifact).load())
        elif not artifact.endswith((".xlsx", ".xls")) and read_provenance(artifact):
            text = self._summarize_table(artifact)
        else:
            dataset = load_dataset(artifact, self.config.cost_model, self.config.add_intercept)
            lines = ["# Dataset", "", f"`{artifact}`", "", "| field | value |", "|---|---|"]
            lines += [f"| {k} | {v} |" for k, v in dataset.summary().items()]
            text = "\n".join(lines) + "\n"
        return markdown.markdown(text, extensions=["tables"]) if html else text

    def _summarize_draws(self, store: DrawStore) -> str:
        records = store.records
        lines = ["# Posterior draws", "",
                 f"- subjects: {store.n}",
                 f"- retained draws: {len(records)}",
                 f"- chains: {store.meta.get('chains')}",
                 f"- grid intervals: {len(store.taus)}",
                 f"- fingerprint: `{store.meta.get('fingerprint')}`"]
        if records:
            n_clusters = [len(np.unique(r.assignments(), axis=0)) for r in records]
            n_omega = [r.edp.J for r in records]
            lines += [f"- mean clusters (omega / joint): {np.mean(n_omega):.2f} / {np.mean(n_clusters):.2f}",
                      f"- mean alpha_omega: {np.mean([r.edp.alpha_omega for r in records]):.4g}",
                      f"- mean alpha_theta: {np.mean([r.edp.alpha_theta for r in records]):.4g}",
                      f"- final acceptance: {records[-1].acceptance}"]
            lines += ["", "## Baseline hazard", "", "| v | tau_hi | mean | lo95 | hi95 |", "|---|---|---|---|---|"]
            for row in hazard_summary(store.lambda_matrix(), store.taus).itertuples():
                lines.append(f"| {row.v} | {row.tau_hi:.4g} | {row.lambda_mean:.4g} | "
                             f"{row.lambda_lo95:.4g} | {row.lambda_hi95:.4g} |")
            if store.has_gcomp() and len(records) >= 2:
                kappa = self.config.kappa
                summary = gcomp_service.summarize_nmb(
                    gcomp_service.psi_values([GcompDraw.from_record(r, kappa) for r in records], kappa))
                lines += ["", "## Net monetary benefit", "",
                          f"At kappa={kappa}: mean {summary.mean:.4g}, 95% interval "
                          f"[{summary.lo95:.4g}, {summary.hi95:.4g}], ESS {summary.ess}"]
        return "\n".join(lines) + "\n"

    def _summarize_table(self, path: str) -> str:
        frame = read_frame(path)
        lines = [f"# {os.path.basename(path)}", "", f"rows: {len(frame)}", "",
                 "| column | mean | min | max |", "|---|---|---|---|"]
        for column in frame.columns:
            values = pd.to_numeric(frame[column], errors="coerce")
            if values.notna().any():
                lines.append(f"| {column} | {values.mean():.4g} | {values.min():.4g} | {values.max():.4g} |")
        return "\n".join(lines) + "\n"

    # plot data

    def emit_plot_data(self, selector: str, source: str, out_dir: str, kappa: Optional[float] = None):
        """
        Plot-ready CSVs.

        prior-hazard  prior_hazard.csv   path_id, t, lambda (source: draws or dataset)
        hazard        hazard.csv         v, tau_lo, tau_hi, lambda_mean, lambda_lo95, lambda_hi95
        ite           ite.csv            i, mean, lo, hi, cluster (sorted by mean)
        graph         graph_edges.csv / graph_nodes.csv
        dsi           dsi.csv            dsi
        predictive    predictive.csv     chain, iteration, i, a, log_t, y, l1..
        """
        if selector not in PLOT_SELECTORS:
            raise ArtifactError(f"unknown plot selector '{selector}', expected one of {PLOT_SELECTORS}")
        if not os.path.exists(source):
            raise ArtifactError(f"artifact not found: {source}")
        kappa = self.config.kappa if kappa is None else float(kappa)
        repo = OutputRepository(out_dir, self._provenance())

        if selector == "prior-hazard":
            if source.endswith(".jsonl"):
                meta = DrawRepository(source).load().meta
                taus, family, params = np.asarray(meta["taus"]), meta["lambda_star_family"], meta["lambda_star_params"]
                b, xi = meta["b"], meta["xi"]
            else:
                dataset = load_dataset(source, self.config.cost_model, self.config.add_intercept)
                hazard, _, _ = prepare_run(dataset, self.config)
                taus, family, params = hazard.taus, hazard.lambda_star_family, hazard.lambda_star_params
                b, xi = hazard.b, hazard.xi
            rng = np.random.default_rng(np.random.SeedSequence([int(self.config.seed), 1]))
            paths = prior_predictive_draws(family, params, b, xi, taus, PRIOR_HAZARD_PATHS, rng)
            return [repo.write("prior_hazard.csv", hazard_paths_frame(taus, paths))]

        store = DrawRepository(source).load()
        if selector == "hazard":
            return [repo.write("hazard.csv", hazard_summary(store.lambda_matrix(), store.taus))]
        if selector == "predictive":
            rng = np.random.default_rng(np.random.SeedSequence([int(self.config.seed), 2]))
            return [repo.write("predictive.csv", gcomp_service.posterior_predictive(store, store.dataset(), rng))]

        gdraws = self._gcomp(store, kappa)
        if selector == "dsi":
            frame = subgroup_service.dsi(self._psi_rows(gdraws, kappa), store)
            return [repo.write("dsi.csv", frame[["dsi"]].dropna())]

        P = subgroup_service.coclustering_probability(store)
        mode, _ = subgroup_service.mode_partition(store, P)
        if selector == "ite":
            frame = gcomp_service.ite_summary(gdraws, kappa).rename(columns={"lo95": "lo", "hi95": "hi"})
            frame["cluster"] = subgroup_service.cluster_labels(mode)
            frame = frame.sort_values(["mean", "i"], kind="mergesort").reset_index(drop=True)
            return [repo.write("ite.csv", frame)]
        edges, nodes = subgroup_service.export_graph(P, self.config.threshold, mode,
                                                     self._psi_rows(gdraws, kappa).mean(axis=0))
        return [repo.write("graph_edges.csv", edges), repo.write("graph_nodes.csv", nodes)]
