#ifndef PCREF_H
#define PCREF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum PcrefStatus {
  PCREF_STATUS_OK = 0,
  PCREF_STATUS_NULL_POINTER = 1,
  PCREF_STATUS_INVALID_UTF8 = 2,
  PCREF_STATUS_IO = 3,
  PCREF_STATUS_PARSE = 4,
  PCREF_STATUS_VALIDATION = 5,
  PCREF_STATUS_INPUT = 6,
  PCREF_STATUS_DOMAIN = 7,
  PCREF_STATUS_PRECONDITION = 8,
  PCREF_STATUS_HEADROOM = 9,
  PCREF_STATUS_NO_CONVERGENCE = 10,
  PCREF_STATUS_PANIC = 11,
} PcrefStatus;

// Opaque technology card.
typedef struct PcrefCard PcrefCard;

// Circuit switches. `topology` is 0 for the proposed reference and 1 for
// the conventional one. Trim codes apply only when `use_trim` is set.
typedef struct PcrefOptions {
  uint32_t topology;
  bool include_diode;
  bool include_replica;
  bool include_m7;
  bool vds_factors;
  bool use_trim;
  uint32_t tc_code;
  uint32_t iref_code;
} PcrefOptions;

// DC operating point. `v_dnw` is NaN when the deep n-well is tied to V_DD.
typedef struct PcrefOperatingPoint {
  double i_ref;
  double i_out;
  double v_b2;
  double v_dnw;
  double i_dio;
  double i_2t;
  double v_gs1;
  double v_gs2;
  double v_sg4;
  bool saturated;
  bool converged;
  uint32_t iterations;
} PcrefOperatingPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pcref_version(void);

// Message of the last failure on this thread (empty if none).
const char *pcref_last_error(void);

// Load a card from a JSON file.
enum PcrefStatus pcref_card_load(const char *path, struct PcrefCard **out);

// Parse a card from a JSON string.
enum PcrefStatus pcref_card_from_json(const char *json, struct PcrefCard **out);

// One of the shipped cards: "fdsoi22" or "bulk110".
enum PcrefStatus pcref_card_builtin(const char *name, struct PcrefCard **out);

// Release a card. Null is ignored.
void pcref_card_free(struct PcrefCard *card);

// New card with a named corner applied; the input card is unchanged.
enum PcrefStatus pcref_card_apply_corner(const struct PcrefCard *card,
                                         const char *corner,
                                         struct PcrefCard **out);

// Nominal supply of the card, V.
enum PcrefStatus pcref_card_nominal_vdd(const struct PcrefCard *card, double *out);

// Default options for a card: proposed topology, diode and replica on,
// M7 when the card has it, V_DS factors on, untrimmed.
enum PcrefStatus pcref_default_options(const struct PcrefCard *card, struct PcrefOptions *out);

// DC operating point at (`v_dd`, `temp`).
enum PcrefStatus pcref_solve(const struct PcrefCard *card,
                             const struct PcrefOptions *opts,
                             double v_dd,
                             double temp,
                             struct PcrefOperatingPoint *out);

// Box-method TC (ppm/°C) over an inclusive temperature grid.
enum PcrefStatus pcref_box_tc(const struct PcrefCard *card,
                              const struct PcrefOptions *opts,
                              double v_dd,
                              double t_min,
                              double t_max,
                              double t_step,
                              double *out);

// TC/(t_max − t_min)·area, ppm/°C²·mm².
enum PcrefStatus pcref_fom1(double tc, double t_min, double t_max, double area_mm2, double *out);

// TC/(t_max − t_min)·i_vdd/i_ref, ppm/°C².
enum PcrefStatus pcref_fom2(double tc,
                            double t_min,
                            double t_max,
                            double i_vdd,
                            double i_ref,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCREF_H */
