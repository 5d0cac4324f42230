#include <stdio.h>
#include <string.h>
#include "iptree.h"

#define CHECK(call)                                                      \
  do {                                                                   \
    IptStatus s_ = (call);                                               \
    if (s_ != IPT_STATUS_OK) {                                           \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, ipt_last_error()); \
      return 1;                                                          \
    }                                                                    \
  } while (0)

int main(void) {
  IptTree *t = NULL, *u = NULL, *r = NULL;
  IptHierarchy *h = NULL;
  bool valid = false, eq = false;
  double res = -1.0, d = -1.0;
  char *json = NULL;

  CHECK(ipt_tree_build(IPT_MODEL_BROWNIAN, 0.5, 0.5, 0, 100, 60, 11, &t));
  CHECK(ipt_tree_check(t, &valid, &res));
  if (!valid || res > 1e-9) return 2;

  CHECK(ipt_tree_to_json(t, &json));
  CHECK(ipt_tree_from_json(json, &u));
  ipt_string_free(json);
  CHECK(ipt_ms_equivalent(t, u, &eq));
  if (!eq) return 3;

  CHECK(ipt_sample_hierarchy(t, 21, 5, &h));
  CHECK(ipt_reconstruct(h, 10, false, &r));
  CHECK(ipt_tree_check(r, &valid, NULL));
  if (!valid) return 4;

  CHECK(ipt_prokhorov(t, t, 0.01, &d));
  if (d != 0.0) return 5;

  if (ipt_tree_from_json("{", &u) != IPT_STATUS_BAD_INPUT) return 6;
  if (ipt_last_error() == NULL || strlen(ipt_last_error()) == 0) return 7;

  ipt_tree_free(t);
  ipt_tree_free(u);
  ipt_tree_free(r);
  ipt_hierarchy_free(h);
  puts("ok");
  return 0;
}
