#pragma once

#include <any>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace clothspread::bt {

enum class TickStatus { success, failure, running };

const char* to_string(TickStatus status);

// Read of a key that was never written, or with the wrong type. Raised as
// its own type so tests can tell programming errors from task failures.
class BlackboardError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TreeStructureError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Shared key-value store the nodes communicate through.
class Blackboard {
 public:
  template <typename T>
  void set(const std::string& key, T value) {
    slots_[key] = std::move(value);
  }

  template <typename T>
  T& get(const std::string& key) {
    auto it = slots_.find(key);
    if (it == slots_.end()) {
      throw BlackboardError("blackboard key '" + key + "' read before write");
    }
    T* value = std::any_cast<T>(&it->second);
    if (!value) {
      throw BlackboardError("blackboard key '" + key + "' holds a different type");
    }
    return *value;
  }

  bool has(const std::string& key) const { return slots_.count(key) > 0; }

  void erase(const std::string& key) { slots_.erase(key); }

 private:
  std::unordered_map<std::string, std::any> slots_;
};

class Node {
 public:
  explicit Node(std::string name) : name_(std::move(name)) {}
  virtual ~Node() = default;

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  // Dispatches to do_tick and reports the visit to the tracer, if any.
  TickStatus tick(Blackboard& bb);

  const std::string& name() const { return name_; }

  virtual std::vector<const Node*> children() const { return {}; }

 protected:
  virtual TickStatus do_tick(Blackboard& bb) = 0;

 private:
  std::string name_;
};

using NodePtr = std::unique_ptr<Node>;

// Ticks children left to right; fails or keeps running at the first child
// that does, succeeds when all do. Re-evaluated from the first child on
// every tick, so earlier children guard later ones continuously.
class SequenceNode : public Node {
 public:
  SequenceNode(std::string name, std::vector<NodePtr> children);
  std::vector<const Node*> children() const override;

 protected:
  TickStatus do_tick(Blackboard& bb) override;

 private:
  std::vector<NodePtr> children_;
};

// Gives its child up to n completed attempts. A child FAILURE below the
// budget is absorbed as RUNNING (the child restarts next tick); the n-th
// FAILURE propagates and the counter resets.
class RetryNode : public Node {
 public:
  RetryNode(std::string name, int max_attempts, NodePtr child);
  std::vector<const Node*> children() const override;

 protected:
  TickStatus do_tick(Blackboard& bb) override;

 private:
  int max_attempts_;
  int failures_ = 0;
  NodePtr child_;
};

class ConditionNode : public Node {
 public:
  ConditionNode(std::string name, std::function<bool(Blackboard&)> predicate);

 protected:
  TickStatus do_tick(Blackboard& bb) override;

 private:
  std::function<bool(Blackboard&)> predicate_;
};

class ActionNode : public Node {
 public:
  ActionNode(std::string name, std::function<TickStatus(Blackboard&)> fn);

 protected:
  TickStatus do_tick(Blackboard& bb) override;

 private:
  std::function<TickStatus(Blackboard&)> fn_;
};

// SUCCESS <-> FAILURE; RUNNING passes through.
class InverterNode : public Node {
 public:
  InverterNode(std::string name, NodePtr child);
  std::vector<const Node*> children() const override;

 protected:
  TickStatus do_tick(Blackboard& bb) override;

 private:
  NodePtr child_;
};

// Repeats its body until the guard condition succeeds. The guard is
// re-evaluated every tick, but only terminates the loop between body
// cycles: a manipulation that is mid-flight finishes (and cleans up)
// before the loop reports SUCCESS. When the body completes (either way)
// the loop bumps the cycle counter on the blackboard so stateful actions
// know to start a fresh cycle.
class GuardedLoopNode : public Node {
 public:
  static constexpr const char* kCycleKey = "bt.cycle";

  GuardedLoopNode(std::string name, NodePtr guard, NodePtr body);
  std::vector<const Node*> children() const override;

 protected:
  TickStatus do_tick(Blackboard& bb) override;

 private:
  NodePtr guard_;
  NodePtr body_;
  bool body_in_flight_ = false;
};

using TraceFn = std::function<void(const Node&, TickStatus)>;

// Owns the root, validates the structure at construction (single root
// child semantics are the caller's wiring; here: non-null nodes, unique
// names), and fans tick visits out to an optional tracer.
class Tree {
 public:
  explicit Tree(NodePtr root);

  TickStatus tick(Blackboard& bb);

  void set_tracer(TraceFn tracer) { tracer_ = std::move(tracer); }
  const Node& root() const { return *root_; }

 private:
  friend class Node;
  NodePtr root_;
  TraceFn tracer_;
};

}  // namespace clothspread::bt
