// Display formatting. Weights arrive in grams and are shown in kg to 3
// decimals; money is always 2 decimals plus the API's currency code.

export function formatKg(grams: number): string {
  return `${(grams / 1000).toFixed(3)} kg`;
}

export function formatMoney(amount: number | null, currency: string | null): string {
  if (amount === null || currency === null) {
    return '—';
  }
  return `${amount.toFixed(2)} ${currency}`;
}
