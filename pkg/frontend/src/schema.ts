/** Minimal JSON-Schema checker for the recorded API contracts.
 *
 * Supports exactly the constructs the recorded schemas use: object
 * types with properties/required/additionalProperties, primitive types,
 * numeric minimum, and anyOf unions.  Returns human-readable violations
 * instead of throwing, so callers can surface them.
 */

export interface JsonSchema {
  type?: string;
  properties?: Record<string, JsonSchema>;
  required?: string[];
  additionalProperties?: boolean;
  minimum?: number;
  anyOf?: JsonSchema[];
  items?: JsonSchema;
  [extra: string]: unknown;
}

function typeOf(value: unknown): string {
  if (value === null) return "null";
  if (Array.isArray(value)) return "array";
  if (typeof value === "number") {
    return Number.isInteger(value) ? "integer" : "number";
  }
  return typeof value;
}

function typeMatches(declared: string, actual: string): boolean {
  if (declared === "number") return actual === "number" || actual === "integer";
  return declared === actual;
}

export function validate(
  value: unknown,
  schema: JsonSchema,
  path = "$",
): string[] {
  const violations: string[] = [];

  if (schema.anyOf) {
    const branches = schema.anyOf.map((branch) => validate(value, branch, path));
    if (!branches.some((errors) => errors.length === 0)) {
      violations.push(`${path}: matches no anyOf branch`);
    }
    return violations;
  }

  const actual = typeOf(value);
  if (schema.type && !typeMatches(schema.type, actual)) {
    violations.push(`${path}: expected ${schema.type}, got ${actual}`);
    return violations;
  }

  if (schema.minimum !== undefined && typeof value === "number") {
    if (value < schema.minimum) {
      violations.push(`${path}: ${value} below minimum ${schema.minimum}`);
    }
  }

  if (schema.type === "object" && typeof value === "object" && value !== null) {
    const record = value as Record<string, unknown>;
    for (const key of schema.required ?? []) {
      if (!(key in record)) {
        violations.push(`${path}: missing required property ${key}`);
      }
    }
    for (const [key, child] of Object.entries(record)) {
      const childSchema = schema.properties?.[key];
      if (childSchema) {
        violations.push(...validate(child, childSchema, `${path}.${key}`));
      } else if (schema.additionalProperties === false) {
        violations.push(`${path}: unexpected property ${key}`);
      }
    }
  }

  if (schema.type === "array" && Array.isArray(value) && schema.items) {
    value.forEach((item, index) => {
      violations.push(...validate(item, schema.items as JsonSchema, `${path}[${index}]`));
    });
  }

  return violations;
}

export function assertValid(value: unknown, schema: JsonSchema, label: string): void {
  const violations = validate(value, schema);
  if (violations.length > 0) {
    throw new Error(`${label} violates recorded schema: ${violations.join("; ")}`);
  }
}
