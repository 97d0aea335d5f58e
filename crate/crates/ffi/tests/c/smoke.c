#include <stdio.h>
#include <string.h>
#include "prpl.h"

#define CHECK(x) do { if ((x) != PRPL_STATUS_OK) { fprintf(stderr, "%s: %s\n", #x, prpl_last_error()); return 1; } } while (0)

int main(void) {
    PrplSchemeConfig scheme;
    PrplBuffer *buf = NULL;
    size_t slot, len, idx[4];
    double probs[4], weights[4];
    const uint8_t *data;

    CHECK(prpl_scheme_default(PRPL_SCHEME_KIND_LAP, &scheme));
    CHECK(prpl_buffer_new(8, &scheme, 16, &buf));
    CHECK(prpl_buffer_add(buf, (const uint8_t *)"abc", 3, &slot));
    CHECK(prpl_buffer_sample(buf, 4, 42, idx, probs, weights));
    CHECK(prpl_buffer_payload(buf, idx[0], &data, &len));
    if (len != 3 || memcmp(data, "abc", 3) != 0 || probs[0] != 1.0) return 2;
    if (prpl_buffer_add(buf, (const uint8_t *)"0123456789abcdefg", 17, &slot) != PRPL_STATUS_PAYLOAD_TOO_LARGE) return 3;

    double deltas[2] = {0.5, 2.0}, values[2], grads[2], lambda;
    PrplLossSpec pal = {PRPL_LOSS_KIND_PAL, 1.0, 1.0, 0.0, 0.0};
    CHECK(prpl_losses(&pal, deltas, 2, NULL, values, grads));
    CHECK(prpl_pal_lambda(deltas, 2, 1.0, 1.0, &lambda));
    if (lambda != 1.5) return 4;
    printf("%s ok %.17g %.17g\n", prpl_version(), grads[0], grads[1]);
    prpl_buffer_free(buf);
    return 0;
}
