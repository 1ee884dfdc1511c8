#include <chrono>
#include <cstdio>
#include <cstdlib>

int main(int argc, char** argv) {
  long n = argc > 1 ? std::atol(argv[1]) : 100000;
  auto t0 = std::chrono::steady_clock::now();
  long long total = 0;
  for (long i = 1; i <= n; i++) total += (long long)i * i % 1000003;
  auto t1 = std::chrono::steady_clock::now();
  printf("sum of squares mod p: %lld\n", total);
  printf("Kernel time: %.6f s\n", std::chrono::duration<double>(t1 - t0).count());
  return 0;
}
