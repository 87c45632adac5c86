#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "alex_lem.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        AlexStatus s_ = (call);                                            \
        if (s_ != ALEX_STATUS_OK) {                                        \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, alex_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: smoke <config.toml> <out-dir>\n");
        return 2;
    }
    AlexConfig *config = NULL;
    AlexDataset *dataset = NULL;
    AlexRun *run = NULL;
    size_t buildings = 0, steps = 0, rounds = 0, written = 0;
    bool converged = false;
    AlexMetrics m;

    CHECK(alex_config_load(argv[1], &config));
    CHECK(alex_dataset_load(config, &dataset));
    CHECK(alex_dataset_shape(dataset, &buildings, &steps));
    CHECK(alex_run_scenario(config, dataset, ALEX_SCENARIO_ALEX, &run));
    CHECK(alex_run_convergence(run, &converged, &rounds));
    CHECK(alex_run_metrics(run, &m));

    double *net = calloc(steps, sizeof(double));
    CHECK(alex_run_net_load(run, net, steps, &written));
    CHECK(alex_run_write(run, config, dataset, argv[2]));

    printf("version=%s buildings=%zu steps=%zu converged=%d rounds=%zu import=%g\n",
           alex_version(), buildings, steps, converged, rounds, m.avg_daily_import);
    int ok = converged && written == steps && fabs(net[0]) < 1e-12;
    free(net);
    alex_run_free(run);
    alex_dataset_free(dataset);
    alex_config_free(config);
    return ok ? 0 : 1;
}
