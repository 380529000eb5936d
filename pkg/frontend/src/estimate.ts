/** Client-side duplicate extrapolation, mirroring the service's arithmetic. */

/** Nearest integer, halves away from zero. */
export function roundHalfAway(value: number): number {
  return value >= 0 ? Math.floor(value + 0.5) : -Math.floor(-value + 0.5);
}

/** round(candidates * confirmed / reviewed); null when nothing is reviewed. */
export function estimateTrueDuplicates(
  candidates: number,
  reviewed: number,
  confirmed: number,
): number | null {
  if (reviewed === 0) return null;
  if (reviewed >= candidates) return confirmed;
  return roundHalfAway((candidates * confirmed) / reviewed);
}

/** Panel text: an em dash stands in for an undefined rate. */
export function formatEstimate(estimate: number | null): string {
  return estimate === null ? "—" : String(estimate);
}
