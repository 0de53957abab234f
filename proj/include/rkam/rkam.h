#ifndef RKAM_RKAM_H
#define RKAM_RKAM_H

/* C interface of the rkam library. Every function returning rkam_status
   records a message retrievable with rkam_last_error() on failure. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct rkam_system rkam_system;

typedef enum rkam_status {
  RKAM_OK = 0,
  RKAM_ERR_CONFIG = 1,
  RKAM_ERR_HYPOTHESIS = 2,
  RKAM_ERR_SOLVER = 3,
  RKAM_ERR_INTERNAL = 4
} rkam_status;

/* System definitions: a JSON file, a JSON string, or a bundled family. */
rkam_status rkam_system_load_file(const char* path, rkam_system** out);
rkam_status rkam_system_load_json(const char* json, rkam_system** out);
rkam_status rkam_system_builtin(const char* name, rkam_system** out);
void rkam_system_free(rkam_system* sys);

rkam_status rkam_system_dims(const rkam_system* sys, int* n, int* m, int* p, int* s);
/* Serializes the definition; free the string with rkam_string_free. */
rkam_status rkam_system_to_json(const rkam_system* sys, char** json_out);
/* max |TG F(w) + F(Gw)| over random samples. */
rkam_status rkam_system_reversibility_residual(const rkam_system* sys, int samples, uint64_t seed, double* out);

/* min over 0 < |j|_1 <= jmax_checked, |J|_1 <= 2 of |<j,omega> + <J,beta>| |j|^tau.
   argmin_j has n entries and argmin_J has d entries (either may be NULL).
   An exact resonance returns RKAM_ERR_HYPOTHESIS and fills the argmins. */
rkam_status rkam_diophantine_check(const double* omega, int n, const double* beta, int d, double tau,
                                   int jmax_checked, double* gamma, int* argmin_j, int* argmin_J);

/* Runs a configuration (JSON object, see the README) and returns the report.
   The status equals the CLI exit code contract (0, 1, 2, 3). The report is
   produced for failures too. */
rkam_status rkam_run(const char* config_json, char** report_json);

void rkam_string_free(char* s);
/* Thread-local message of the last failure in this thread. */
const char* rkam_last_error(void);
const char* rkam_version(void);

#ifdef __cplusplus
}
#endif

#endif
