/* C interface to the fesense library.
 *
 * Every function returns fe_status; on any non-FE_OK return the thread-local
 * message from fe_last_error() describes what went wrong. Functions that
 * produce structured output hand back an fe_report handle the caller must
 * release with fe_report_free().
 */
#ifndef FESENSE_H
#define FESENSE_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fe_status {
  FE_OK = 0,
  FE_ERR_INVALID_ARGUMENT = 1,
  FE_ERR_IO = 2,
  FE_ERR_RUNTIME = 3,
  FE_ERR_VERIFICATION = 4
} fe_status;

/* Library version, static storage. */
const char* fe_version(void);

/* Message for the most recent failure on this thread; empty after success. */
const char* fe_last_error(void);

/* Result of a run, verify, inspect, fit, or bench call. */
typedef struct fe_report fe_report;

/* 1 if the operation's checks all passed, 0 if not, -1 on a null handle. */
int fe_report_passed(const fe_report* report);

/* JSON body of the report. Owned by the handle; valid until fe_report_free. */
const char* fe_report_json(const fe_report* report);

void fe_report_free(fe_report* report);

/* Run one experiment described by a JSON config into out_dir. The report
 * carries the run manifest; "passed" reflects the manifest verdict. */
fe_status fe_run_experiment(const char* config_json, const char* out_dir,
                            fe_report** out_report);

/* Re-check an existing run directory: file hashes plus every assertion that
 * can be recomputed from the stored artifacts. */
fe_status fe_verify_run(const char* run_dir, fe_report** out_report);

/* Load a run's manifest without recomputing anything. */
fe_status fe_inspect_run(const char* run_dir, fe_report** out_report);

/* Scalar properties of a spin-resonance parameter set, given as the same
 * JSON object the experiment configs use under "odmr". */
fe_status fe_odmr_sensitivity(const char* odmr_json, double* out_t_per_sqrt_hz);
fe_status fe_odmr_sensing_point(const char* odmr_json, double* out_hz);
fe_status fe_odmr_linearity_bound(const char* odmr_json, double* out_t);

/* Synthesize a photon tag stream and write it as a tag file. The config
 * needs "odmr", "signal", "duration_s"; "seed", "detector" and
 * "drive_frequency_hz" are optional. */
fe_status fe_simulate_tags(const char* config_json, const char* tag_path);

/* Header fields of a tag file. Any output pointer may be NULL. */
fe_status fe_tagfile_info(const char* tag_path, unsigned long long* out_n_tags,
                          double* out_duration_s, unsigned long long* out_seed);

/* Bin a tag file and write the (optionally segment-averaged) power spectrum
 * as CSV. Pass segment_s = 0 to transform the whole stream at once. */
fe_status fe_spectrum_csv_from_tags(const char* tag_path, double bin_width_s,
                                    double segment_s, const char* csv_path);

/* Least-squares fit of a named model ("lorentzian", "hyperfine-triplet",
 * "bandwidth", "telegraph", "powerlaw") to n points. sigma may be NULL. */
fe_status fe_fit_xy(const char* model, size_t n, const double* x, const double* y,
                    const double* sigma, fe_report** out_report);

/* Timing exercise: simulate a constant-rate stream, bin it, transform it.
 * The report carries tag counts and per-stage wall times. */
fe_status fe_bench(double duration_s, double rate_hz, double bin_width_s,
                   unsigned long long seed, fe_report** out_report);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FESENSE_H */
