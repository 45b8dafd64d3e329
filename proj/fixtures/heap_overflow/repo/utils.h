#ifndef UTILS_H
#define UTILS_H

#include <stddef.h>

#define BUF_SIZE 64

void safe_copy(char *dst, const char *src, size_t);
int is_printable(const char *s);
void upcase(char *s);
unsigned checksum(const char *s);

#endif
