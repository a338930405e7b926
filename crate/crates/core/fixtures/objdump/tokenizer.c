#include <ctype.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

enum kind { NUM, IDENT, OP, END };

struct token {
    enum kind kind;
    long value;
    char text[32];
};

static int classify(int c) {
    if (c == '+' || c == '-' || c == '*' || c == '/') return OP;
    if (c >= '0' && c <= '9') return NUM;
    if (isalpha(c) || c == '_') return IDENT;
    return END;
}

static const char *next(const char *p, struct token *t) {
    while (*p == ' ' || *p == '\t') p++;
    if (*p == 0) { t->kind = END; return p; }
    t->kind = classify((unsigned char)*p);
    if (t->kind == NUM) {
        t->value = strtol(p, (char **)&p, 10);
    } else if (t->kind == IDENT) {
        size_t n = 0;
        while ((isalnum((unsigned char)*p) || *p == '_') && n < sizeof t->text - 1)
            t->text[n++] = *p++;
        t->text[n] = 0;
    } else if (t->kind == OP) {
        t->text[0] = *p++;
        t->text[1] = 0;
    } else {
        p++;
    }
    return p;
}

static long apply(long a, char op, long b) {
    switch (op) {
    case '+': return a + b;
    case '-': return a - b;
    case '*': return a * b;
    case '/': return b != 0 ? a / b : 0;
    }
    return a;
}

static long clamp(long v, long lo, long hi) {
    if (v < lo) return lo;
    if (v > hi) return hi;
    return v;
}

static unsigned hash(const char *s) {
    unsigned h = 2166136261u;
    while (*s) {
        h ^= (unsigned char)*s++;
        h *= 16777619u;
    }
    return h;
}

static long eval(const char *line) {
    struct token t;
    long acc = 0;
    char op = '+';
    const char *p = line;
    for (;;) {
        p = next(p, &t);
        if (t.kind == END) break;
        if (t.kind == NUM) acc = apply(acc, op, t.value);
        else if (t.kind == IDENT) acc = apply(acc, op, (long)(hash(t.text) % 100));
        else op = t.text[0];
        if (acc > 1000000 || acc < -1000000) acc = clamp(acc, -1000000, 1000000);
    }
    return acc;
}

int main(int argc, char **argv) {
    char buf[256];
    long total = 0;
    unsigned lines = 0;
    FILE *in = argc > 1 ? fopen(argv[1], "r") : stdin;
    if (!in) {
        perror("fopen");
        return 1;
    }
    while (fgets(buf, sizeof buf, in)) {
        size_t n = strlen(buf);
        if (n > 0 && buf[n - 1] == '\n') buf[n - 1] = 0;
        if (buf[0] == '#') continue;
        long v = eval(buf);
        if (v != 0) printf("%u: %ld\n", lines, v);
        total += v;
        lines++;
    }
    if (in != stdin) fclose(in);
    fprintf(stderr, "%u lines, total %ld\n", lines, total);
    return total >= 0 ? 0 : 2;
}
