/**
 * Client-side slice of the engine's theory vocabulary: which chord and key
 * symbols the selectors may emit. Which pitch classes are out of key is NOT
 * decided here; the studio uses the service's /theory/keys table so the rows
 * it flags are exactly the rows the engine enforces.
 */

export const PC_NAMES = [
  "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
] as const;

const LETTER_TO_PC: Record<string, number> = {
  C: 0, D: 2, E: 4, F: 5, G: 7, A: 9, B: 11,
};

/** Quality suffixes the engine's chord parser accepts, palette order. */
export const CHORD_SUFFIXES = ["", "m", "7", "m7", "maj7", "dim", "aug"] as const;

/** Canonical palette: 12 sharp-spelled roots x 7 qualities. */
export const CHORD_SYMBOLS: readonly string[] = PC_NAMES.flatMap((root) =>
  CHORD_SUFFIXES.map((suffix) => root + suffix),
);

/** 12 major + 12 minor key symbols, plus the "derive" pseudo-choice. */
export const KEY_SYMBOLS: readonly string[] = [
  ...PC_NAMES,
  ...PC_NAMES.map((pc) => pc + "m"),
];
export const DERIVE_KEY = "derive";

export function parsePitchClass(text: string): number | null {
  const m = /^([A-Ga-g])([#b]?)$/.exec(text.trim());
  if (!m) return null;
  let pc = LETTER_TO_PC[m[1]!.toUpperCase()]!;
  if (m[2] === "#") pc += 1;
  else if (m[2] === "b") pc -= 1;
  return ((pc % 12) + 12) % 12;
}

/** True iff the engine's chord parser accepts the symbol (root + known
 * suffix; flat spellings like "Bb7" included). */
export function isChordSymbol(symbol: string): boolean {
  const text = symbol.trim();
  // longest suffix first so "maj7" is not read as root + "m"
  const suffixes = [...CHORD_SUFFIXES].sort((a, b) => b.length - a.length);
  for (const suffix of suffixes) {
    if (!text.endsWith(suffix)) continue;
    const root = text.slice(0, text.length - suffix.length);
    if (parsePitchClass(root) !== null) return true;
  }
  return false;
}

export function isKeySymbol(symbol: string): boolean {
  const text = symbol.trim();
  if (text.endsWith("m")) return parsePitchClass(text.slice(0, -1)) !== null;
  return parsePitchClass(text) !== null;
}
