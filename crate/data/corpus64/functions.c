#include <ctype.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

struct node {
    int value;
    struct node *next;
};

struct point {
    double x;
    double y;
};

/** Sum all the elements of an integer array. */
int array_sum(const int *a, int n) {
    int sum = 0;
    int i;
    for (i = 0; i < n; i++)
        sum += a[i];
    return sum;
}

/** Find the largest value stored in an array of integers. */
int array_max(const int *a, int n) {
    int best = a[0];
    int i;
    for (i = 1; i < n; i++) {
        if (a[i] > best)
            best = a[i];
    }
    return best;
}

/** Return the index of the smallest element in the array. */
int index_of_min(const double *v, int n) {
    int idx = 0;
    int i;
    for (i = 1; i < n; i++) {
        if (v[i] < v[idx])
            idx = i;
    }
    return idx;
}

/** Reverse the characters of a string in place. */
void reverse_string(char *s) {
    int i = 0;
    int j = strlen(s) - 1;
    while (i < j) {
        char t = s[i];
        s[i] = s[j];
        s[j] = t;
        i++;
        j--;
    }
}

/** Count how many times a character occurs in a string. */
int count_char(const char *s, char c) {
    int count = 0;
    while (*s) {
        if (*s == c)
            count++;
        s++;
    }
    return count;
}

/** Compute the factorial of a non-negative number recursively. */
long factorial(int n) {
    if (n <= 1)
        return 1;
    long rest = factorial(n - 1);
    return n * rest;
}

/** Compute the nth Fibonacci number with an iterative loop. */
long fibonacci(int n) {
    long a = 0;
    long b = 1;
    int i;
    for (i = 0; i < n; i++) {
        long t = a + b;
        a = b;
        b = t;
    }
    return a;
}

/** Compute the greatest common divisor of two integers using Euclid's algorithm. */
int gcd(int a, int b) {
    while (b != 0) {
        int r = a % b;
        a = b;
        b = r;
    }
    return a;
}

/** Check whether a number is prime by trial division. */
int is_prime(int n) {
    int d;
    if (n < 2)
        return 0;
    for (d = 2; d * d <= n; d++) {
        if (n % d == 0)
            return 0;
    }
    return 1;
}

/** Raise a base to an integer power by repeated squaring. */
long power_mod(long base, long exp, long mod) {
    long result = 1;
    base = base % mod;
    while (exp > 0) {
        if (exp & 1)
            result = (result * base) % mod;
        base = (base * base) % mod;
        exp >>= 1;
    }
    return result;
}

/** Sort an integer array in ascending order with bubble sort. */
void bubble_sort(int *a, int n) {
    int i, j;
    for (i = 0; i < n - 1; i++) {
        for (j = 0; j < n - 1 - i; j++) {
            if (a[j] > a[j + 1]) {
                int t = a[j];
                a[j] = a[j + 1];
                a[j + 1] = t;
            }
        }
    }
}

/** Sort numbers using insertion sort. */
void insertion_sort(int *a, int n) {
    int i;
    for (i = 1; i < n; i++) {
        int key = a[i];
        int j = i - 1;
        while (j >= 0) {
            if (a[j] <= key)
                break;
            a[j + 1] = a[j];
            j--;
        }
        a[j + 1] = key;
    }
}

/** Search a sorted array for a key with binary search. */
int binary_search(const int *a, int n, int key) {
    int lo = 0;
    int hi = n - 1;
    while (lo <= hi) {
        int mid = lo + (hi - lo) / 2;
        if (a[mid] == key)
            return mid;
        if (a[mid] < key)
            lo = mid + 1;
        else
            hi = mid - 1;
    }
    return -1;
}

/** Find the position of a value with a linear scan. */
int linear_search(const int *a, int n, int key) {
    int i;
    for (i = 0; i < n; i++) {
        if (a[i] == key)
            return i;
    }
    return -1;
}

/** Compute the length of a singly linked list. */
int list_length(struct node *head) {
    int len = 0;
    struct node *p = head;
    while (p != NULL) {
        len++;
        p = p->next;
    }
    return len;
}

/** Insert a new value at the front of a linked list. */
struct node *list_push(struct node *head, int value) {
    struct node *n = malloc(sizeof(struct node));
    if (n == NULL)
        return head;
    n->value = value;
    n->next = head;
    return n;
}

/** Reverse a singly linked list and return the new head. */
struct node *list_reverse(struct node *head) {
    struct node *prev = NULL;
    struct node *cur = head;
    while (cur) {
        struct node *next = cur->next;
        cur->next = prev;
        prev = cur;
        cur = next;
    }
    return prev;
}

/** Release every node of a linked list. */
void list_free(struct node *head) {
    while (head) {
        struct node *next = head->next;
        free(head);
        head = next;
    }
}

/** Add up the values held in a linked list. */
long list_sum(struct node *head) {
    long total = 0;
    for (; head; head = head->next) {
        total += head->value;
    }
    return total;
}

/** Convert a string to upper case letters. */
void to_upper(char *s) {
    while (*s) {
        *s = toupper((unsigned char)*s);
        s++;
    }
    return;
}

/** Parse a decimal integer from a string of digits. */
int parse_int(const char *s) {
    int sign = 1;
    int value = 0;
    if (*s == '-') {
        sign = -1;
        s++;
    }
    while (isdigit((unsigned char)*s)) {
        value = value * 10 + (*s - '0');
        s++;
    }
    return sign * value;
}

/** Check whether a string reads the same forwards and backwards. */
int is_palindrome(const char *s) {
    int i = 0;
    int j = strlen(s) - 1;
    while (i < j) {
        if (s[i] != s[j])
            return 0;
        i++;
        j--;
    }
    return 1;
}

/** Count the number of words separated by spaces in a line of text. */
int count_words(const char *s) {
    int words = 0;
    int in_word = 0;
    for (; *s; s++) {
        if (isspace((unsigned char)*s)) {
            in_word = 0;
        } else if (!in_word) {
            in_word = 1;
            words++;
        }
    }
    return words;
}

/** Copy a string into a newly allocated buffer. */
char *duplicate_string(const char *s) {
    size_t len = strlen(s);
    char *copy = malloc(len + 1);
    if (copy == NULL)
        return NULL;
    memcpy(copy, s, len + 1);
    return copy;
}

/** Concatenate two strings into freshly allocated memory. */
char *concat_strings(const char *a, const char *b) {
    size_t la = strlen(a);
    size_t lb = strlen(b);
    char *out = malloc(la + lb + 1);
    if (!out)
        return NULL;
    memcpy(out, a, la);
    memcpy(out + la, b, lb + 1);
    return out;
}

/** Compute the Euclidean distance between two points. */
double point_distance(struct point a, struct point b) {
    double dx = a.x - b.x;
    double dy = a.y - b.y;
    double d2 = dx * dx + dy * dy;
    double r = d2;
    int i;
    for (i = 0; i < 20; i++)
        r = 0.5 * (r + d2 / r);
    return r;
}

/** Compute the dot product of two vectors of doubles. */
double dot_product(const double *a, const double *b, int n) {
    double acc = 0.0;
    int i;
    for (i = 0; i < n; i++) {
        acc += a[i] * b[i];
    }
    return acc;
}

/** Multiply two square matrices stored in row-major order. */
void matrix_multiply(const double *a, const double *b, double *c, int n) {
    int i, j, k;
    for (i = 0; i < n; i++)
        for (j = 0; j < n; j++) {
            double s = 0;
            for (k = 0; k < n; k++)
                s += a[i * n + k] * b[k * n + j];
            c[i * n + j] = s;
        }
}

/** Transpose a square matrix in place. */
void transpose(double *m, int n) {
    int i, j;
    for (i = 0; i < n; i++) {
        for (j = i + 1; j < n; j++) {
            double t = m[i * n + j];
            m[i * n + j] = m[j * n + i];
            m[j * n + i] = t;
        }
    }
}

/** Compute the arithmetic mean of an array of doubles. */
double mean(const double *v, int n) {
    double total = 0;
    int i;
    if (n == 0)
        return 0.0;
    for (i = 0; i < n; i++)
        total += v[i];
    return total / n;
}

/** Compute the variance of a sample of values. */
double variance(const double *v, int n) {
    double m = 0, s = 0;
    int i;
    for (i = 0; i < n; i++)
        m += v[i];
    m /= n;
    for (i = 0; i < n; i++)
        s += (v[i] - m) * (v[i] - m);
    return s / n;
}

/** Clamp a value so that it lies between a lower and an upper bound. */
int clamp(int x, int lo, int hi) {
    int r = x;
    if (r < lo)
        r = lo;
    else if (r > hi)
        r = hi;
    return r;
}

/** Return the absolute value of an integer without branching on the sign bit. */
int absolute_value(int x) {
    int mask = x >> 31;
    int shifted = x + mask;
    int result = shifted ^ mask;
    return result;
}

/** Count the bits set to one in an unsigned integer. */
int popcount(unsigned int x) {
    int count = 0;
    while (x) {
        x &= x - 1;
        count++;
    }
    return count;
}

/** Swap the values of two integers through pointers. */
void swap_ints(int *a, int *b) {
    int tmp = *a;
    *a = *b;
    *b = tmp;
    return;
}

/** Fill an array with the same value at every position. */
void fill_array(int *a, int n, int value) {
    int i = 0;
    while (i < n) {
        a[i] = value;
        i++;
    }
}

/** Allocate a zero initialized array of integers. */
int *alloc_zeroed(int n) {
    int *p = malloc(n * sizeof(int));
    int i;
    if (p == NULL)
        return NULL;
    for (i = 0; i < n; i++)
        p[i] = 0;
    return p;
}

/** Check whether an array is sorted in non-decreasing order. */
int is_sorted(const int *a, int n) {
    int i;
    for (i = 1; i < n; i++) {
        if (a[i - 1] > a[i])
            return 0;
    }
    return 1;
}

/** Remove consecutive duplicate values from a sorted array. */
int unique_sorted(int *a, int n) {
    int w = 0;
    int r;
    if (n == 0)
        return 0;
    for (r = 1; r < n; r++) {
        if (a[r] != a[w])
            a[++w] = a[r];
    }
    return w + 1;
}

/** Rotate the elements of an array left by one position. */
void rotate_left(int *a, int n) {
    int first = a[0];
    int i;
    for (i = 0; i < n - 1; i++)
        a[i] = a[i + 1];
    a[n - 1] = first;
    return;
}

/** Compute prefix sums of an array into an output buffer. */
void prefix_sums(const int *a, int *out, int n) {
    int running = 0;
    int i;
    for (i = 0; i < n; i++) {
        running += a[i];
        out[i] = running;
    }
}

/** Convert a temperature from Celsius to Fahrenheit degrees. */
double celsius_to_fahrenheit(double c) {
    double scaled = c * 9.0;
    double ratio = scaled / 5.0;
    double f = ratio + 32.0;
    if (f < -459.67)
        f = -459.67;
    return f;
}

/** Evaluate a polynomial at a point using Horner's rule. */
double horner(const double *coef, int degree, double x) {
    double r = coef[degree];
    int i;
    for (i = degree - 1; i >= 0; i--) {
        r = r * x + coef[i];
    }
    return r;
}

/** Compute an integer square root by binary search. */
int isqrt(int n) {
    int lo = 0, hi = n, ans = 0;
    while (lo <= hi) {
        int mid = (lo + hi) / 2;
        if ((long)mid * mid <= n) {
            ans = mid;
            lo = mid + 1;
        } else {
            hi = mid - 1;
        }
    }
    return ans;
}

/** Count the decimal digits of a positive integer. */
int count_digits(long n) {
    int digits = 1;
    if (n < 0)
        n = -n;
    while (n >= 10) {
        n /= 10;
        digits++;
    }
    return digits;
}

/** Reverse the decimal digits of a number. */
long reverse_digits(long n) {
    long r = 0;
    while (n > 0) {
        r = r * 10 + n % 10;
        n = n / 10;
    }
    return r;
}

/** Compute the sum of the decimal digits of a number. */
int digit_sum(int n) {
    int s = 0;
    do {
        s += n % 10;
        n /= 10;
    } while (n > 0);
    return s;
}

/** Test whether a year is a leap year in the Gregorian calendar. */
int is_leap_year(int year) {
    if (year % 400 == 0)
        return 1;
    if (year % 100 == 0)
        return 0;
    if (year % 4 == 0)
        return 1;
    return 0;
}

/** Map a numeric score to a letter grade character. */
char letter_grade(int score) {
    switch (score / 10) {
    case 10:
    case 9:
        return 'A';
    case 8:
        return 'B';
    case 7:
        return 'C';
    case 6:
        return 'D';
    default:
        return 'F';
    }
}

/** Return the number of days in a given month of a year. */
int days_in_month(int month, int leap) {
    switch (month) {
    case 2:
        if (leap)
            return 29;
        return 28;
    case 4:
    case 6:
    case 9:
    case 11:
        return 30;
    default:
        return 31;
    }
}

/** Compare two strings ignoring differences in letter case. */
int compare_ignore_case(const char *a, const char *b) {
    while (*a) {
        if (!*b)
            break;
        int ca = tolower((unsigned char)*a);
        int cb = tolower((unsigned char)*b);
        if (ca != cb)
            return ca - cb;
        a++;
        b++;
    }
    return tolower((unsigned char)*a) - tolower((unsigned char)*b);
}

/** Remove trailing whitespace characters from the end of a string. */
void trim_trailing(char *s) {
    int n = strlen(s);
    while (n > 0) {
        if (!isspace((unsigned char)s[n - 1]))
            break;
        n--;
    }
    s[n] = '\0';
    return;
}

/** Check whether a string starts with the given prefix. */
int starts_with(const char *s, const char *prefix) {
    while (*prefix) {
        if (*s != *prefix)
            return 0;
        s++;
        prefix++;
    }
    return 1;
}

/** Count the vowels that appear in a word. */
int count_vowels(const char *s) {
    int n = 0;
    for (; *s; s++) {
        char c = tolower((unsigned char)*s);
        if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u')
            n++;
    }
    return n;
}

/** Compute a simple hash code for a string of characters. */
unsigned long hash_string(const char *s) {
    unsigned long h = 5381;
    int c;
    while ((c = *s++) != 0) {
        h = ((h << 5) + h) + c;
    }
    return h;
}

/** Encrypt text with a Caesar shift of the alphabet. */
void caesar_shift(char *s, int k) {
    for (; *s; s++) {
        if (*s >= 'a' && *s <= 'z')
            *s = 'a' + (*s - 'a' + k) % 26;
        else if (*s >= 'A' && *s <= 'Z')
            *s = 'A' + (*s - 'A' + k) % 26;
    }
}

/** Write the binary representation of a number into a buffer. */
void to_binary(unsigned int x, char *buf) {
    int i;
    for (i = 31; i >= 0; i--) {
        if ((x >> i) & 1)
            buf[31 - i] = '1';
        else
            buf[31 - i] = '0';
    }
    buf[32] = '\0';
    return;
}

/** Open a file and count the lines it contains. */
int count_file_lines(const char *path) {
    FILE *f = fopen(path, "r");
    int lines = 0;
    int c;
    if (f == NULL)
        return -1;
    while ((c = fgetc(f)) != EOF) {
        if (c == '\n')
            lines++;
    }
    fclose(f);
    return lines;
}

/** Write an array of integers to a text file, one per line. */
int save_numbers(const char *path, const int *a, int n) {
    FILE *f = fopen(path, "w");
    int i;
    if (!f)
        return -1;
    for (i = 0; i < n; i++)
        fprintf(f, "%d\n", a[i]);
    fclose(f);
    return 0;
}

/** Allocate memory for the file descriptors of a process table. */
int *alloc_descriptor_table(int count) {
    int *fds = calloc(count, sizeof(int));
    int i;
    if (fds == NULL)
        return NULL;
    for (i = 0; i < count; i++)
        fds[i] = -1;
    return fds;
}

/** Grow a dynamic buffer to at least the requested capacity. */
int *grow_buffer(int *buf, int *capacity, int needed) {
    int cap = *capacity;
    int *bigger;
    if (needed <= cap)
        return buf;
    if (cap == 0)
        cap = 4;
    while (cap < needed)
        cap = cap * 2;
    bigger = realloc(buf, cap * sizeof(int));
    if (bigger)
        *capacity = cap;
    return bigger;
}

/** Compute the area of a triangle from three corner points. */
double triangle_area(struct point a, struct point b, struct point c) {
    double cross = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if (cross < 0)
        cross = -cross;
    double area = cross / 2.0;
    return area;
}

/** Merge two sorted arrays into a single sorted output array. */
void merge_sorted(const int *a, int na, const int *b, int nb, int *out) {
    int i = 0, j = 0, k = 0;
    while (i < na) {
        if (j >= nb)
            break;
        if (a[i] <= b[j])
            out[k++] = a[i++];
        else
            out[k++] = b[j++];
    }
    while (i < na)
        out[k++] = a[i++];
    while (j < nb)
        out[k++] = b[j++];
}

/** Compute the binomial coefficient n choose k. */
long binomial(int n, int k) {
    long r = 1;
    int i;
    if (k > n - k)
        k = n - k;
    for (i = 1; i <= k; i++) {
        r = r * (n - k + i) / i;
    }
    return r;
}
