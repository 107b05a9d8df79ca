#include "ioncouple.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "config.hpp"
#include "errors.hpp"
#include "runner.hpp"

using namespace ioncouple;

struct icp_config {
    config::Document doc;
};

struct icp_result {
    runner::ResultBundle bundle;
    std::string directory, format, prefix;
};

namespace {

thread_local std::string last_error;

icp_status status_of(ErrorKind k) {
    switch (k) {
        case ErrorKind::Argument: return ICP_ERR_ARGUMENT;
        case ErrorKind::Config: return ICP_ERR_CONFIG;
        case ErrorKind::Numerical: return ICP_ERR_NUMERICAL;
        case ErrorKind::Undefined: return ICP_ERR_UNDEFINED;
        case ErrorKind::Unsupported: return ICP_ERR_UNSUPPORTED;
        case ErrorKind::Io: return ICP_ERR_IO;
    }
    return ICP_ERR_INTERNAL;
}

template <class F>
icp_status guarded(F &&f) {
    last_error.clear();
    try {
        f();
        return ICP_OK;
    } catch (const Error &e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc &) {
        last_error = "out of memory";
    } catch (const std::exception &e) {
        last_error = e.what();
    } catch (...) {
        last_error = "unknown failure";
    }
    return ICP_ERR_INTERNAL;
}

icp_status missing(const char *what) {
    last_error = std::string("null argument: ") + what;
    return ICP_ERR_ARGUMENT;
}

char *copy(const std::string &s) {
    char *p = static_cast<char *>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

}  // namespace

extern "C" {

const char *icp_last_error(void) { return last_error.c_str(); }

const char *icp_version(void) { return IONCOUPLE_VERSION; }

const char *icp_status_name(icp_status s) {
    switch (s) {
        case ICP_OK: return "ok";
        case ICP_ERR_ARGUMENT: return "argument error";
        case ICP_ERR_CONFIG: return "configuration error";
        case ICP_ERR_NUMERICAL: return "numerical failure";
        case ICP_ERR_UNDEFINED: return "undefined statistic";
        case ICP_ERR_UNSUPPORTED: return "unsupported";
        case ICP_ERR_IO: return "i/o error";
        case ICP_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

icp_status icp_config_parse(const char *text, icp_config **out) {
    if (!text) return missing("text");
    if (!out) return missing("out");
    *out = nullptr;
    return guarded([&] { *out = new icp_config{config::parse(text)}; });
}

icp_status icp_config_load(const char *path, icp_config **out) {
    if (!path) return missing("path");
    if (!out) return missing("out");
    *out = nullptr;
    return guarded([&] { *out = new icp_config{config::load(path)}; });
}

void icp_config_free(icp_config *c) { delete c; }

icp_status icp_config_set_seed(icp_config *c, uint64_t seed) {
    if (!c) return missing("config");
    return guarded([&] { c->doc.set_seed(seed); });
}

icp_status icp_config_canonical(const icp_config *c, char **out) {
    if (!c) return missing("config");
    if (!out) return missing("out");
    *out = nullptr;
    return guarded([&] { *out = copy(config::canonical(c->doc)); });
}

icp_status icp_config_hash(const icp_config *c, char **out) {
    if (!c) return missing("config");
    if (!out) return missing("out");
    *out = nullptr;
    return guarded([&] { *out = copy(config::config_hash(c->doc)); });
}

icp_status icp_run(const icp_config *c, const char *experiment, icp_result **out) {
    if (!c) return missing("config");
    if (!experiment) return missing("experiment");
    if (!out) return missing("out");
    *out = nullptr;
    return guarded([&] {
        const auto e = runner::experiment_from_name(experiment);
        auto r = new icp_result{runner::run(c->doc, e), c->doc.text("output", "directory", "."),
                                c->doc.text("output", "format", "csv"), c->doc.text("output", "prefix", experiment)};
        *out = r;
    });
}

void icp_result_free(icp_result *r) { delete r; }

icp_status icp_result_emit_csv(const icp_result *r, const char *table, char **out) {
    if (!r) return missing("result");
    if (!out) return missing("out");
    *out = nullptr;
    return guarded([&] { *out = copy(runner::emit_csv(r->bundle, table ? table : "")); });
}

icp_status icp_result_emit_json(const icp_result *r, char **out) {
    if (!r) return missing("result");
    if (!out) return missing("out");
    *out = nullptr;
    return guarded([&] { *out = copy(runner::emit_json(r->bundle)); });
}

icp_status icp_result_write(const icp_result *r, const char *directory, const char *format, const char *prefix,
                            char **written) {
    if (!r) return missing("result");
    if (written) *written = nullptr;
    return guarded([&] {
        const auto files = runner::write(r->bundle, directory ? directory : r->directory, format ? format : r->format,
                                         prefix ? prefix : r->prefix);
        if (written) {
            std::string all;
            for (const auto &f : files) all += f + "\n";
            *written = copy(all);
        }
    });
}

icp_status icp_result_scalar(const icp_result *r, const char *name, double *value, double *error) {
    if (!r) return missing("result");
    if (!name) return missing("name");
    return guarded([&] {
        if (!r->bundle.has_scalar(name)) throw ArgumentError(std::string("no scalar named '") + name + "'");
        const auto &s = r->bundle.scalar(name);
        if (value) *value = s.value;
        if (error) *error = s.error;
    });
}

size_t icp_result_table_count(const icp_result *r) { return r ? r->bundle.tables.size() : 0; }

const char *icp_result_table_name(const icp_result *r, size_t i) {
    return r && i < r->bundle.tables.size() ? r->bundle.tables[i].name.c_str() : nullptr;
}

size_t icp_result_warning_count(const icp_result *r) { return r ? r->bundle.warnings.size() : 0; }

const char *icp_result_warning(const icp_result *r, size_t i) {
    return r && i < r->bundle.warnings.size() ? r->bundle.warnings[i].c_str() : nullptr;
}

void icp_string_free(char *s) { std::free(s); }

}  // extern "C"
