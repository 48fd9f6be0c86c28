#ifndef FLEXGRID_H
#define FLEXGRID_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes; the CLI uses them verbatim as process exit codes. */
#define FXG_OK 0
#define FXG_ERR_INTERNAL 1
#define FXG_ERR_INPUT 2
#define FXG_ERR_POWERFLOW 3
#define FXG_ERR_VIOLATIONS 4
#define FXG_ERR_INFEASIBLE 5

/* Library version, static storage. */
const char* fxg_version(void);

/* Message of the last failing call on the calling thread ("" if none). */
const char* fxg_last_error(void);

/* Releases any string handed out through a char** out-parameter. */
void fxg_string_free(char* text);

/* Scenario: grid path, FOR paths, method and loop options. */
typedef struct fxg_scenario fxg_scenario;

/* Loads a scenario file; relative paths inside resolve against its folder. */
int fxg_scenario_load(const char* path, fxg_scenario** out);

/* Builds an in-memory scenario from explicit grid and FOR file paths. */
int fxg_scenario_build(const char* grid_path, const char* const* for_paths, size_t n_fors,
                       fxg_scenario** out);

int fxg_scenario_set_method(fxg_scenario* sc, const char* method);
int fxg_scenario_set_max_iters(fxg_scenario* sc, int max_iters);

/* 1 if the scenario carries a sweep block, else 0. */
int fxg_scenario_has_sweep(const fxg_scenario* sc);

void fxg_scenario_free(fxg_scenario* sc);

/* Commands mirror the CLI subcommands. Each returns a status code from the
 * table above and, when summary is non-NULL, stores a human-readable account
 * there (release with fxg_string_free). Artifact writers touch only out_dir;
 * `command` is echoed into the run manifest. */

/* Checks that every referenced file parses and passes its invariants. Pass
 * either a scenario or a grid (with optional FOR files), not both. */
int fxg_cmd_validate(const char* grid_path, const char* const* for_paths, size_t n_fors,
                     const char* scenario_path, char** summary);

int fxg_cmd_powerflow(const char* grid_path, const char* out_dir, const char* command,
                      char** summary);

int fxg_cmd_solve(const fxg_scenario* sc, const char* out_dir, const char* command,
                  char** summary);

int fxg_cmd_sweep(const fxg_scenario* sc, const char* out_dir, const char* command,
                  char** summary);

/* Writes a self-contained synthetic study case (grid, FORs, scenario). */
int fxg_cmd_synth(unsigned long long seed, const char* method, const char* out_dir,
                  char** summary);

#ifdef __cplusplus
}
#endif

#endif /* FLEXGRID_H */
