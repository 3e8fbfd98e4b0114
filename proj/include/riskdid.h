/* riskdid C API: risk-set matched difference-in-differences for staggered
 * exposures. Opaque handles, status codes, JSON option strings. Every
 * function returns RSD_OK on success; on failure rsd_last_error() holds a
 * message for the calling thread. Strings returned through out-parameters
 * are owned by the caller and released with rsd_string_free(). */

#ifndef RISKDID_H
#define RISKDID_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rsd_status {
  RSD_OK = 0,
  RSD_ERR_IO = 1,
  RSD_ERR_PARSE = 2,
  RSD_ERR_CONFIG = 3,
  RSD_ERR_MISSING_DATA = 4,
  RSD_ERR_DUPLICATE_ROW = 5,
  RSD_ERR_BAD_EXPOSURE = 6,
  RSD_ERR_DOMAIN = 7,
  RSD_ERR_NAME = 8,
  RSD_ERR_EMPTY_DESIGN = 9,
  RSD_ERR_DEGENERATE = 10,
  RSD_ERR_SPLIT = 11,
  RSD_ERR_UNSUPPORTED = 12,
  RSD_ERR_INTERNAL = 13
} rsd_status;

typedef struct rsd_panel rsd_panel;
typedef struct rsd_design rsd_design;

const char* rsd_version(void);
const char* rsd_status_name(rsd_status status);

/* message from the most recent failing call on this thread; empty string
 * when no error has occurred */
const char* rsd_last_error(void);

void rsd_string_free(char* s);

/* ---- panels ---- */

/* Long-format CSV inputs; schema_json maps column names and declares
 * categorical/continuous covariates (empty string = defaults). */
rsd_status rsd_panel_load(const char* outcomes_csv, const char* covariates_csv,
                          const char* exposures_csv, const char* schema_json, rsd_panel** out);

rsd_status rsd_panel_generate(const char* synth_config_json, rsd_panel** out);

/* Writes outcomes.csv, covariates.csv, exposures.csv, panel.json, schema.json. */
rsd_status rsd_panel_write(const rsd_panel* panel, const char* dir);

rsd_status rsd_panel_from_json(const char* json_text, rsd_panel** out);
rsd_status rsd_panel_to_json(const rsd_panel* panel, char** json_out);

/* Report of invariant violations; RSD_OK even when violations exist. */
rsd_status rsd_panel_validate(const rsd_panel* panel, char** report_json_out);

void rsd_panel_free(rsd_panel* panel);

/* ---- matching ---- */

/* match_spec_json: {"exact": [names], "calipers": {"age": 2.5, ...},
 *                   "max_controls": 5, "min_controls": 1} */
rsd_status rsd_match_run(const rsd_panel* panel, const char* match_spec_json, rsd_design** out);

rsd_status rsd_design_write(const rsd_design* design, const char* csv_path,
                            const char* audit_json_path);
rsd_status rsd_design_read(const char* csv_path, const char* audit_json_path, rsd_design** out);

/* Balance rows for all sets ("all" subgroup). */
rsd_status rsd_balance_write(const rsd_design* design, const rsd_panel* panel,
                             const char* csv_path);

void rsd_design_free(rsd_design* design);

/* ---- estimation and sensitivity ---- */

/* opts_json: {"outcomes": [...], "horizons": ["month","year"], "alpha": 0.05,
 *             "side": "two_sided"}; outcomes default to all in the panel. */
rsd_status rsd_estimate_write(const rsd_design* design, const rsd_panel* panel,
                              const char* opts_json, const char* csv_path);

/* opts_json adds "gammas": [1, 1.5, 2]. */
rsd_status rsd_sensitivity_write(const rsd_design* design, const rsd_panel* panel,
                                 const char* opts_json, const char* csv_path);

/* ---- effect modification ---- */

/* opts_json: {"outcome": name, "horizon": "month", "group_by": [categorical
 * covariate names], "alpha": 0.05, "alpha1": 0.025, "gamma": 1.0,
 * "grid_points": 101, "mc_draws": 200000, "seed": 1}. Groups are the joint
 * cells of the named covariates at each set's matching time; comparisons are
 * one row per covariate level plus one per cell plus the global row. */
rsd_status rsd_submax_write(const rsd_design* design, const rsd_panel* panel,
                            const char* opts_json, const char* csv_path,
                            const char* summary_json_path);

/* opts_json: {"outcome", "horizon", "covariates": [...], "discovery_fraction":
 * 0.25, "seed", "alpha", "alpha1", "gamma", "min_leaf", "max_depth",
 * "complexity", "mc_draws", "grid_points"}. Writes the discovered tree
 * (JSON + text), per-leaf confirmation table, submax table, and R2 bounds. */
rsd_status rsd_discover_write(const rsd_design* design, const rsd_panel* panel,
                              const char* opts_json, const char* out_dir);

/* opts_json: {"n_treated": 2000, "replications": 1000, "seed": 1,
 *             "scenarios": "benchmark" | [{"label","tau":[..4],"discovery_fraction"}],
 *             "alpha", "alpha1", "mc_draws", "grid_points", "threads",
 *             "min_leaf", "max_depth", "complexity"} */
rsd_status rsd_simulate_write(const char* opts_json, const char* csv_path,
                              const char* json_path);

#ifdef __cplusplus
}
#endif

#endif /* RISKDID_H */
