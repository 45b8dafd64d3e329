#include "utils.h"

#include <ctype.h>
#include <stdio.h>
#include <string.h>

/* Small string helpers shared by the echo tool. */

int is_printable(const char *s)
{
    if (s == NULL)
        return 0;
    for (; *s != '\0'; ++s) {
        if (!isprint((unsigned char)*s))
            return 0;
    }
    return 1;
}

void upcase(char *s)
{
    if (s == NULL)
        return;
    for (; *s != '\0'; ++s)
        *s = (char)toupper((unsigned char)*s);
}

unsigned checksum(const char *s)
{
    unsigned h = 2166136261u;
    if (s == NULL)
        return 0;
    for (; *s != '\0'; ++s) {
        h ^= (unsigned char)*s;
        h *= 16777619u;
    }
    return h;
}

void safe_copy(char *dst, const char *src, size_t len)
{
    if (dst == NULL || src == NULL) {
        return;
    }
    memcpy(dst, src, len);
}
