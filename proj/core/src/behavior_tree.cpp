#include "clothspread/behavior_tree.hpp"

#include <unordered_set>

namespace clothspread::bt {

namespace {

// Set for the duration of Tree::tick so nested node visits reach the
// tree's tracer without threading a context through every signature.
thread_local const TraceFn* g_active_tracer = nullptr;

void collect_names(const Node& node, std::unordered_set<std::string>& seen) {
  if (!seen.insert(node.name()).second) {
    throw TreeStructureError("duplicate node name '" + node.name() + "'");
  }
  for (const Node* child : node.children()) {
    collect_names(*child, seen);
  }
}

}  // namespace

const char* to_string(TickStatus status) {
  switch (status) {
    case TickStatus::success:
      return "SUCCESS";
    case TickStatus::failure:
      return "FAILURE";
    case TickStatus::running:
      return "RUNNING";
  }
  return "UNKNOWN";
}

TickStatus Node::tick(Blackboard& bb) {
  const TickStatus status = do_tick(bb);
  if (g_active_tracer && *g_active_tracer) {
    (*g_active_tracer)(*this, status);
  }
  return status;
}

SequenceNode::SequenceNode(std::string name, std::vector<NodePtr> children)
    : Node(std::move(name)), children_(std::move(children)) {
  if (children_.empty()) {
    throw TreeStructureError("sequence '" + this->name() + "' needs children");
  }
  for (const NodePtr& c : children_) {
    if (!c) throw TreeStructureError("sequence '" + this->name() + "' has a null child");
  }
}

std::vector<const Node*> SequenceNode::children() const {
  std::vector<const Node*> out;
  for (const NodePtr& c : children_) out.push_back(c.get());
  return out;
}

TickStatus SequenceNode::do_tick(Blackboard& bb) {
  for (const NodePtr& child : children_) {
    const TickStatus status = child->tick(bb);
    if (status != TickStatus::success) {
      return status;
    }
  }
  return TickStatus::success;
}

RetryNode::RetryNode(std::string name, int max_attempts, NodePtr child)
    : Node(std::move(name)), max_attempts_(max_attempts), child_(std::move(child)) {
  if (max_attempts_ < 1) {
    throw TreeStructureError("retry '" + this->name() + "' needs attempts >= 1");
  }
  if (!child_) {
    throw TreeStructureError("retry '" + this->name() + "' has no child");
  }
}

std::vector<const Node*> RetryNode::children() const { return {child_.get()}; }

TickStatus RetryNode::do_tick(Blackboard& bb) {
  const TickStatus status = child_->tick(bb);
  switch (status) {
    case TickStatus::running:
      return TickStatus::running;
    case TickStatus::success:
      failures_ = 0;
      return TickStatus::success;
    case TickStatus::failure:
      if (++failures_ >= max_attempts_) {
        failures_ = 0;
        return TickStatus::failure;
      }
      return TickStatus::running;  // child gets another chance next tick
  }
  return TickStatus::failure;
}

ConditionNode::ConditionNode(std::string name,
                             std::function<bool(Blackboard&)> predicate)
    : Node(std::move(name)), predicate_(std::move(predicate)) {
  if (!predicate_) {
    throw TreeStructureError("condition '" + this->name() + "' has no predicate");
  }
}

TickStatus ConditionNode::do_tick(Blackboard& bb) {
  return predicate_(bb) ? TickStatus::success : TickStatus::failure;
}

ActionNode::ActionNode(std::string name,
                       std::function<TickStatus(Blackboard&)> fn)
    : Node(std::move(name)), fn_(std::move(fn)) {
  if (!fn_) {
    throw TreeStructureError("action '" + this->name() + "' has no body");
  }
}

TickStatus ActionNode::do_tick(Blackboard& bb) { return fn_(bb); }

InverterNode::InverterNode(std::string name, NodePtr child)
    : Node(std::move(name)), child_(std::move(child)) {
  if (!child_) {
    throw TreeStructureError("inverter '" + this->name() + "' has no child");
  }
}

std::vector<const Node*> InverterNode::children() const { return {child_.get()}; }

TickStatus InverterNode::do_tick(Blackboard& bb) {
  switch (child_->tick(bb)) {
    case TickStatus::success:
      return TickStatus::failure;
    case TickStatus::failure:
      return TickStatus::success;
    case TickStatus::running:
      return TickStatus::running;
  }
  return TickStatus::failure;
}

GuardedLoopNode::GuardedLoopNode(std::string name, NodePtr guard, NodePtr body)
    : Node(std::move(name)), guard_(std::move(guard)), body_(std::move(body)) {
  if (!guard_ || !body_) {
    throw TreeStructureError("loop '" + this->name() + "' needs a guard and a body");
  }
}

std::vector<const Node*> GuardedLoopNode::children() const {
  return {guard_.get(), body_.get()};
}

TickStatus GuardedLoopNode::do_tick(Blackboard& bb) {
  const bool flattened = guard_->tick(bb) == TickStatus::success;
  if (flattened && !body_in_flight_) {
    return TickStatus::success;
  }
  if (!bb.has(kCycleKey)) {
    bb.set<long>(kCycleKey, 0);
  }
  const TickStatus body_status = body_->tick(bb);
  body_in_flight_ = body_status == TickStatus::running;
  if (!body_in_flight_) {
    ++bb.get<long>(kCycleKey);  // stateful actions key off this serial
  }
  return TickStatus::running;
}

Tree::Tree(NodePtr root) : root_(std::move(root)) {
  if (!root_) {
    throw TreeStructureError("tree has no root");
  }
  std::unordered_set<std::string> seen;
  collect_names(*root_, seen);
}

TickStatus Tree::tick(Blackboard& bb) {
  g_active_tracer = &tracer_;
  const TickStatus status = root_->tick(bb);
  g_active_tracer = nullptr;
  return status;
}

}  // namespace clothspread::bt
