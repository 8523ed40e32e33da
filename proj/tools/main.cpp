#include <cstdio>
int main() { std::puts("rfmpc"); return 0; }
