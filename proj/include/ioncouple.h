#ifndef IONCOUPLE_H
#define IONCOUPLE_H

#include <stddef.h>
#include <stdint.h>

#if defined(IONCOUPLE_BUILDING)
#define ICP_API __attribute__((visibility("default")))
#else
#define ICP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum icp_status {
    ICP_OK = 0,
    ICP_ERR_ARGUMENT = 1,
    ICP_ERR_CONFIG = 2,
    ICP_ERR_NUMERICAL = 3,
    ICP_ERR_UNDEFINED = 4,   /* statistic not defined for the data, e.g. empty class */
    ICP_ERR_UNSUPPORTED = 5,
    ICP_ERR_IO = 6,
    ICP_ERR_INTERNAL = 7,
} icp_status;

typedef struct icp_config icp_config;
typedef struct icp_result icp_result;

/* Message of the last failed call on this thread; empty after a success. Owned by the library. */
ICP_API const char *icp_last_error(void);
ICP_API const char *icp_version(void);
ICP_API const char *icp_status_name(icp_status status);

ICP_API icp_status icp_config_parse(const char *text, icp_config **out);
ICP_API icp_status icp_config_load(const char *path, icp_config **out);
ICP_API void icp_config_free(icp_config *config);
ICP_API icp_status icp_config_set_seed(icp_config *config, uint64_t seed);
/* Canonical text and its 16-digit hash; free with icp_string_free. */
ICP_API icp_status icp_config_canonical(const icp_config *config, char **out);
ICP_API icp_status icp_config_hash(const icp_config *config, char **out);

/* Experiments: modes, couple, scan-freq, scan-time, hom, ramsey, swap-decay, qnd, design-voltages. */
ICP_API icp_status icp_run(const icp_config *config, const char *experiment, icp_result **out);
ICP_API void icp_result_free(icp_result *result);

/* CSV of one table (NULL or "" for the primary one), or the whole bundle as JSON. */
ICP_API icp_status icp_result_emit_csv(const icp_result *result, const char *table, char **out);
ICP_API icp_status icp_result_emit_json(const icp_result *result, char **out);
/* NULL arguments fall back to the [output] section, then to ".", "csv" and the experiment name.
   `written`, when non-NULL, receives the file paths separated by newlines. */
ICP_API icp_status icp_result_write(const icp_result *result, const char *directory, const char *format,
                                    const char *prefix, char **written);

ICP_API icp_status icp_result_scalar(const icp_result *result, const char *name, double *value, double *error);
ICP_API size_t icp_result_table_count(const icp_result *result);
ICP_API const char *icp_result_table_name(const icp_result *result, size_t index);
ICP_API size_t icp_result_warning_count(const icp_result *result);
ICP_API const char *icp_result_warning(const icp_result *result, size_t index);

ICP_API void icp_string_free(char *s);

#ifdef __cplusplus
}
#endif

#endif
