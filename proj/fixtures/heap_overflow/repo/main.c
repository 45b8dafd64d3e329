#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "utils.h"

/*
 * echo-tool: prints its argument back, optionally upper-cased, with a
 * checksum. Input longer than the internal buffer is truncated on output.
 */

struct options {
    int upper;
    int show_checksum;
    int quiet;
};

static void usage(const char *prog)
{
    fprintf(stderr, "usage: %s [-u] [-c] [-q] TEXT\n", prog);
    fprintf(stderr, "  -u  upper-case the output\n");
    fprintf(stderr, "  -c  print a checksum after the text\n");
    fprintf(stderr, "  -q  print nothing, exit status only\n");
}

static int parse_flag(struct options *opts, const char *arg)
{
    if (strcmp(arg, "-u") == 0) {
        opts->upper = 1;
        return 1;
    }
    if (strcmp(arg, "-c") == 0) {
        opts->show_checksum = 1;
        return 1;
    }
    if (strcmp(arg, "-q") == 0) {
        opts->quiet = 1;
        return 1;
    }
    return 0;
}

static int parse_args(int argc, char **argv, struct options *opts,
                      const char **text)
{
    int i;

    memset(opts, 0, sizeof(*opts));
    *text = NULL;
    for (i = 1; i < argc; ++i) {
        if (argv[i][0] == '-' && argv[i][1] != '\0') {
            if (!parse_flag(opts, argv[i]))
                return -1;
            continue;
        }
        if (*text != NULL)
            return -1;
        *text = argv[i];
    }
    return *text == NULL ? -1 : 0;
}

static void emit(const struct options *opts, char *buf, size_t shown)
{
    if (opts->quiet)
        return;
    if (opts->upper)
        upcase(buf);
    printf("%.*s\n", (int)shown, buf);
    if (opts->show_checksum)
        printf("checksum %08x\n", checksum(buf));
}

int main(int argc, char **argv)
{
    struct options opts;
    const char *input;
    size_t user_input_size;
    size_t shown;
    char *buf;

    if (parse_args(argc, argv, &opts, &input) != 0) {
        usage(argv[0]);
        return 2;
    }
    if (!is_printable(input)) {
        fprintf(stderr, "input must be printable\n");
        return 2;
    }

    buf = malloc(BUF_SIZE + 1);
    if (buf == NULL) {
        perror("malloc");
        return 1;
    }
    memset(buf, 0, BUF_SIZE + 1);

    user_input_size = strlen(input);
    shown = user_input_size < BUF_SIZE ? user_input_size : BUF_SIZE;

    /* copy the user text into the fixed-size buffer */
    safe_copy(buf, input, user_input_size);
    emit(&opts, buf, shown);
    free(buf);
    return 0;
}
