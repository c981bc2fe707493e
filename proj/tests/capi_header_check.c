#include "otre/otre.h"

int otre_header_is_c(void) {
  otre_re_config cfg;
  otre_re_config_default(&cfg);
  return cfg.max_iters > 0 && otre_status_name(OTRE_OK) != NULL;
}
