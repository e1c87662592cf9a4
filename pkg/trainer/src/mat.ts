/**
 * Dense row-major matrices on typed arrays, with the three GEMM variants
 * the training loops need. The 4x2 register-blocked kernels are what keeps
 * desk-scale training inside its time budget, so keep inner loops free of
 * bounds-checked helpers.
 */

export interface Mat {
  rows: number;
  cols: number;
  data: Float64Array<ArrayBufferLike>;
}

export function zeros(rows: number, cols: number): Mat {
  return { rows, cols, data: new Float64Array(rows * cols) };
}

export function matFrom(rows: number, cols: number, values: ArrayLike<number>): Mat {
  if (values.length !== rows * cols) {
    throw new Error(`matFrom: ${values.length} values for ${rows}x${cols}`);
  }
  return { rows, cols, data: Float64Array.from(values) };
}

export function copy(a: Mat): Mat {
  return { rows: a.rows, cols: a.cols, data: a.data.slice() };
}

export function fill(a: Mat, v: number): void {
  a.data.fill(v);
}

/** C += A (rows x K) * B^T, where B is (cols x K) row-major. */
export function gemmNT(a: Mat, b: Mat, c: Mat): void {
  if (a.cols !== b.cols || c.rows !== a.rows || c.cols !== b.rows) {
    throw new Error(`gemmNT: (${a.rows}x${a.cols})(${b.rows}x${b.cols})^T -> (${c.rows}x${c.cols})`);
  }
  const M = a.rows, K = a.cols, N = b.rows;
  const A = a.data, B = b.data, C = c.data;
  const M4 = M - (M % 4), N2 = N - (N % 2);
  for (let i = 0; i < M4; i += 4) {
    const a0 = i * K, a1 = a0 + K, a2 = a1 + K, a3 = a2 + K;
    for (let j = 0; j < N2; j += 2) {
      const b0 = j * K, b1 = b0 + K;
      let c00 = 0, c01 = 0, c10 = 0, c11 = 0;
      let c20 = 0, c21 = 0, c30 = 0, c31 = 0;
      for (let k = 0; k < K; k++) {
        const x0 = A[a0 + k], x1 = A[a1 + k], x2 = A[a2 + k], x3 = A[a3 + k];
        const y0 = B[b0 + k], y1 = B[b1 + k];
        c00 += x0 * y0; c01 += x0 * y1;
        c10 += x1 * y0; c11 += x1 * y1;
        c20 += x2 * y0; c21 += x2 * y1;
        c30 += x3 * y0; c31 += x3 * y1;
      }
      let ci = i * N + j;
      C[ci] += c00; C[ci + 1] += c01; ci += N;
      C[ci] += c10; C[ci + 1] += c11; ci += N;
      C[ci] += c20; C[ci + 1] += c21; ci += N;
      C[ci] += c30; C[ci + 1] += c31;
    }
    for (let j = N2; j < N; j++) {
      const bj = j * K;
      for (let ii = i; ii < i + 4; ii++) {
        let acc = 0;
        const ai = ii * K;
        for (let k = 0; k < K; k++) acc += A[ai + k] * B[bj + k];
        C[ii * N + j] += acc;
      }
    }
  }
  for (let i = M4; i < M; i++) {
    const ai = i * K;
    for (let j = 0; j < N; j++) {
      const bj = j * K;
      let acc = 0;
      for (let k = 0; k < K; k++) acc += A[ai + k] * B[bj + k];
      C[i * N + j] += acc;
    }
  }
}

/** C += A (rows x K) * B (K x cols), saxpy ordering. */
export function gemmNN(a: Mat, b: Mat, c: Mat): void {
  if (a.cols !== b.rows || c.rows !== a.rows || c.cols !== b.cols) {
    throw new Error(`gemmNN: (${a.rows}x${a.cols})(${b.rows}x${b.cols}) -> (${c.rows}x${c.cols})`);
  }
  const M = a.rows, K = a.cols, N = b.cols;
  const A = a.data, B = b.data, C = c.data;
  for (let i = 0; i < M; i++) {
    const ci = i * N, ai = i * K;
    for (let k = 0; k < K; k++) {
      const x = A[ai + k];
      if (x === 0) continue;
      const bk = k * N;
      for (let j = 0; j < N; j++) C[ci + j] += x * B[bk + j];
    }
  }
}

/** C += A^T * B for A (K x rows), B (K x cols): gradient accumulation. */
export function gemmTN(a: Mat, b: Mat, c: Mat): void {
  if (a.rows !== b.rows || c.rows !== a.cols || c.cols !== b.cols) {
    throw new Error(`gemmTN: (${a.rows}x${a.cols})^T(${b.rows}x${b.cols}) -> (${c.rows}x${c.cols})`);
  }
  const K = a.rows, M = a.cols, N = b.cols;
  const A = a.data, B = b.data, C = c.data;
  for (let k = 0; k < K; k++) {
    const ak = k * M, bk = k * N;
    for (let i = 0; i < M; i++) {
      const x = A[ak + i];
      if (x === 0) continue;
      const ci = i * N;
      for (let j = 0; j < N; j++) C[ci + j] += x * B[bk + j];
    }
  }
}

/** View of contiguous rows [r0, r1) of a matrix; shares the buffer. */
export function rowBlock(a: Mat, r0: number, r1: number): Mat {
  return {
    rows: r1 - r0,
    cols: a.cols,
    data: a.data.subarray(r0 * a.cols, r1 * a.cols),
  };
}
