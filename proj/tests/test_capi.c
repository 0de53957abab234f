/* Exercises the C interface from C. */

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "rkam/rkam.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expectation failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

static void test_systems(void) {
  rkam_system* sys = NULL;
  int n = 0, m = 0, p = 0, s = 0;
  double res = 1.0;
  char* js = NULL;
  rkam_system* back = NULL;

  EXPECT(rkam_system_builtin("desk-context2", &sys) == RKAM_OK);
  EXPECT(rkam_system_dims(sys, &n, &m, &p, &s) == RKAM_OK);
  EXPECT(n == 1 && m == 1 && p == 1 && s == 3);
  EXPECT(rkam_system_reversibility_residual(sys, 50, 3, &res) == RKAM_OK);
  EXPECT(res < 1e-13);

  EXPECT(rkam_system_to_json(sys, &js) == RKAM_OK);
  EXPECT(js != NULL && strstr(js, "\"dims\"") != NULL);
  EXPECT(rkam_system_load_json(js, &back) == RKAM_OK);
  EXPECT(rkam_system_dims(back, &n, NULL, NULL, NULL) == RKAM_OK && n == 1);
  rkam_string_free(js);
  rkam_system_free(back);
  rkam_system_free(sys);

  sys = NULL;
  EXPECT(rkam_system_load_file(RKAM_DATA_DIR "/desk-context1.json", &sys) == RKAM_OK);
  EXPECT(rkam_system_dims(sys, NULL, &m, NULL, NULL) == RKAM_OK && m == 1);
  rkam_system_free(sys);

  EXPECT(rkam_system_builtin("nope", &sys) == RKAM_ERR_CONFIG);
  EXPECT(strstr(rkam_last_error(), "nope") != NULL);
  EXPECT(rkam_system_load_json("{not json", &sys) == RKAM_ERR_CONFIG);
  EXPECT(rkam_system_load_file("/no/such/file.json", &sys) == RKAM_ERR_CONFIG);
  EXPECT(rkam_system_dims(NULL, &n, &m, &p, &s) == RKAM_ERR_CONFIG);
  rkam_system_free(NULL);
}

static void test_diophantine(void) {
  const double omega[2] = {1.0, 0.5};
  const double golden[1] = {1.6180339887498949};
  double gamma = -1.0;
  int j[2] = {0, 0};
  int J[1] = {7};

  EXPECT(rkam_diophantine_check(omega, 2, NULL, 0, 1.5, 8, &gamma, j, NULL) == RKAM_ERR_HYPOTHESIS);
  EXPECT(j[0] == 1 && j[1] == -2);
  EXPECT(gamma == 0.0);

  EXPECT(rkam_diophantine_check(golden, 1, NULL, 0, 1.0, 20, &gamma, j, J) == RKAM_OK);
  /* n = 1: the minimum sits at j = 1 */
  EXPECT(fabs(gamma - golden[0]) < 1e-15);
  EXPECT(rkam_diophantine_check(golden, 1, NULL, 0, -1.0, 20, &gamma, j, J) == RKAM_ERR_CONFIG);
}

static void test_run(void) {
  char* report = NULL;
  rkam_status st = rkam_run("{\"system\": \"builtin:resonant\", \"mode\": \"check-dioph\"}", &report);
  EXPECT(st == RKAM_ERR_HYPOTHESIS);
  EXPECT(report != NULL && strstr(report, "resonant_j") != NULL);
  rkam_string_free(report);

  st = rkam_run("{\"system\": \"builtin:desk-context2\", \"mode\": \"context2\", \"eps\": [0]}", &report);
  EXPECT(st == RKAM_OK);
  EXPECT(strstr(report, "\"solutions\"") != NULL);
  rkam_string_free(report);

  st = rkam_run("{\"mode\": 3}", &report);
  EXPECT(st == RKAM_ERR_CONFIG);
  EXPECT(strstr(report, "\"error\"") != NULL);
  rkam_string_free(report);

  st = rkam_run("not json", &report);
  EXPECT(st == RKAM_ERR_CONFIG);
  rkam_string_free(report);

  EXPECT(rkam_run(NULL, &report) == RKAM_ERR_CONFIG);
  EXPECT(strlen(rkam_version()) > 0);
}

int main(void) {
  test_systems();
  test_diophantine();
  test_run();
  if (failures) {
    fprintf(stderr, "%d expectation(s) failed\n", failures);
    return 1;
  }
  printf("C interface: all expectations met\n");
  return 0;
}
