/** AdamW with decoupled weight decay over named parameter buffers. */

export interface AdamWConfig {
  lr: number;
  beta1: number;
  beta2: number;
  eps: number;
  weightDecay: number;
}

export const ADAMW_DEFAULTS: AdamWConfig = {
  lr: 1e-4,
  beta1: 0.9,
  beta2: 0.999,
  eps: 1e-8,
  weightDecay: 0.01,
};

export class AdamW {
  private m = new Map<string, Float64Array>();
  private v = new Map<string, Float64Array>();
  private t = 0;

  constructor(public config: AdamWConfig = { ...ADAMW_DEFAULTS }) {}

  beginStep(): void {
    this.t += 1;
  }

  /** Update one parameter buffer in place. decay=false for biases/norms. */
  update(name: string, theta: Float64Array, grad: Float64Array, decay = true): void {
    if (this.t === 0) throw new Error("call beginStep() before update()");
    let m = this.m.get(name);
    let v = this.v.get(name);
    if (!m) {
      m = new Float64Array(theta.length);
      v = new Float64Array(theta.length);
      this.m.set(name, m);
      this.v.set(name, v);
    }
    const { lr, beta1, beta2, eps, weightDecay } = this.config;
    const bc1 = 1 - Math.pow(beta1, this.t);
    const bc2 = 1 - Math.pow(beta2, this.t);
    const wd = decay ? weightDecay : 0;
    for (let i = 0; i < theta.length; i++) {
      const g = grad[i];
      m[i] = beta1 * m[i] + (1 - beta1) * g;
      v![i] = beta2 * v![i] + (1 - beta2) * g * g;
      const mh = m[i] / bc1;
      const vh = v![i] / bc2;
      theta[i] -= lr * (mh / (Math.sqrt(vh) + eps) + wd * theta[i]);
    }
  }
}
