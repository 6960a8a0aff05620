/* cargo build -p loadprompt-ffi, then from crates/ffi:
   cc -I include c/evaluate.c -L ../../target/debug -l:libloadprompt_ffi.a -lm -lpthread -ldl */
#include <stdio.h>
#include "loadprompt.h"

int main(void) {
    LpDataset *ds = NULL;
    if (lp_dataset_synth(7, 90, 6, &ds) != LP_STATUS_OK) {
        fprintf(stderr, "synth: %s\n", lp_last_error());
        return 1;
    }
    LpEvalOptions opts = lp_eval_options_default();
    opts.train_months = 1;
    opts.val_months = 1;
    opts.test_months = 1;

    LpMetrics m;
    LpStatus st = lp_evaluate(ds, "A", "seasonal:24", NULL, &opts, &m);
    if (st != LP_STATUS_OK) {
        fprintf(stderr, "evaluate (%d): %s\n", st, lp_last_error());
        lp_dataset_free(ds);
        return 1;
    }
    printf("rmse=%.3f mae=%.3f windows=%zu faults=%zu\n", m.rmse, m.mae, m.windows, m.faults);
    lp_dataset_free(ds);
    return 0;
}
