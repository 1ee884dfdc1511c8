#include <cstdio>
#include <cstdlib>
#include <omp.h>

int main(int argc, char** argv) {
  long n = argc > 1 ? std::atol(argv[1]) : 100000;
  double t0 = omp_get_wtime();
  long long total = 0;
  #pragma omp parallel for reduction(+:total) schedule(static)
  for (long i = 1; i <= n; i++) total += (long long)i * i % 1000003;
  double t1 = omp_get_wtime();
  printf("sum of squares mod p: %lld\n", total);
  printf("Kernel time: %.6f s\n", t1 - t0);
  return 0;
}
