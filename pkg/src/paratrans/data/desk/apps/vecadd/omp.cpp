#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>
#include <omp.h>

int main(int argc, char** argv) {
  int n = argc > 1 ? std::atoi(argv[1]) : 1000;
  std::vector<double> a(n), b(n), c(n);
  for (int i = 0; i < n; i++) {
    a[i] = 0.5 * i;
    b[i] = 2.0 * i;
  }
  double t0 = omp_get_wtime();
  #pragma omp parallel for schedule(static)
  for (int i = 0; i < n; i++) c[i] = a[i] + b[i];
  double t1 = omp_get_wtime();
  double sum = 0.0;
  for (int i = 0; i < n; i++) sum += c[i];
  printf("n = %d\n", n);
  printf("checksum: %.6f\n", sum);
  printf("Total time: %.6f s\n", t1 - t0);
  printf("PASS\n");
  return 0;
}
